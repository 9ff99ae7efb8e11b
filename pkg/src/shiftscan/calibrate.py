"""Monte Carlo calibration: ARL estimation, threshold search, and EDD.

Reproducibility contract: replicate i draws from a generator seeded by
SeedSequence([master_seed, i]) and generates in fixed 256-step blocks, so
results are identical for any worker count and for streamed vs. one-shot
generation (normal draws are consumed element by element, so the block
split never changes the values).  Threshold search reuses one master seed
across candidate thresholds (common random numbers), which makes the
estimated ARL monotone in b along the search path.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .detectors import DetectorConfig
from .errors import CalibrationError, ConfigError

RNG_NAME = "numpy-pcg64-ziggurat"

_GEN_BLOCK = 256


def _replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


@dataclass(frozen=True)
class StreamSpec:
    """Synthetic unit-variance Gaussian stream, optionally with a mean shift.

    Samples 1..change_point are N(0, I); samples change_point+1..horizon
    are N(mean_shift, I).  change_point=0 means the stream starts shifted;
    change_point=None (with mean_shift=None) means no change at all.
    """

    dim: int
    horizon: int
    change_point: int | None = None
    mean_shift: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dim}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if (self.change_point is None) != (self.mean_shift is None):
            raise ConfigError("change_point and mean_shift must be given together")
        if self.change_point is not None:
            if not (0 <= self.change_point < self.horizon):
                raise ConfigError(
                    f"change_point must lie in [0, horizon), got {self.change_point}"
                )
            shift = np.ascontiguousarray(self.mean_shift, dtype=np.float64)
            if shift.shape != (self.dim,):
                raise ConfigError(
                    f"mean_shift must have length {self.dim}, got {shift.shape}"
                )
            if not np.isfinite(shift).all():
                raise ConfigError("mean_shift must be finite")
            object.__setattr__(self, "mean_shift", shift)


def sparse_mean(dim: int, support: int, magnitude: float) -> np.ndarray:
    """Mean vector with `magnitude` on the first `support` coordinates."""
    if not (0 <= support <= dim):
        raise ConfigError(f"support must lie in [0, {dim}], got {support}")
    mu = np.zeros(dim, dtype=np.float64)
    mu[:support] = magnitude
    return mu


def generate_stream(spec: StreamSpec) -> np.ndarray:
    """Materialize the full (horizon, dim) stream for replicate 0 of spec.seed.

    Identical, sample for sample, to what the Monte Carlo loops feed their
    first replicate, so single CLI runs and replicate 0 of an EDD study
    see the same data.
    """
    rng = _replicate_rng(spec.seed, 0)
    X = rng.standard_normal((spec.horizon, spec.dim))
    if spec.change_point is not None:
        X[spec.change_point :] += spec.mean_shift
    return X


def _run_replicate(config: DetectorConfig, threshold: float, rng, t_max: int, shift=None):
    """One fresh detector on one generated stream; stop time or None."""
    det = config.build(threshold)
    while det.t < t_max and not det.stopped:
        n = min(_GEN_BLOCK, t_max - det.t)
        X = rng.standard_normal((n, config.dim))
        if shift is not None:
            X += shift
        det.update_block(X)
    return det.stop_time


def _map_replicates(fn, replicates: int, workers: int):
    if workers <= 1:
        return [fn(i) for i in range(replicates)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(replicates)))


@dataclass
class CalibrationResult:
    """Threshold plus the Monte Carlo evidence behind it."""

    threshold: float
    arl_estimate: float
    standard_error: float
    replicates: int
    truncation_horizon: int
    truncated_runs: int
    converged: bool = True
    warnings: list[str] = field(default_factory=list)
    rng: str = RNG_NAME
    lengths: np.ndarray | None = None  # raw per-replicate run lengths

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "arl_estimate": self.arl_estimate,
            "standard_error": self.standard_error,
            "replicates": self.replicates,
            "truncation_horizon": self.truncation_horizon,
            "truncated_runs": self.truncated_runs,
            "converged": self.converged,
            "warnings": list(self.warnings),
            "rng": self.rng,
        }


@dataclass
class EddResult:
    """Mean detection delay over replicates with the change at time 0."""

    mean_delay: float
    standard_error: float
    stopped_runs: int
    replicates: int
    horizon: int
    threshold: float
    warnings: list[str] = field(default_factory=list)
    rng: str = RNG_NAME
    delays: np.ndarray | None = None  # stop times of the runs that stopped

    def to_dict(self) -> dict:
        return {
            "mean_delay": self.mean_delay,
            "standard_error": self.standard_error,
            "stopped_runs": self.stopped_runs,
            "replicates": self.replicates,
            "horizon": self.horizon,
            "threshold": self.threshold,
            "warnings": list(self.warnings),
            "rng": self.rng,
        }


def estimate_arl(
    config: DetectorConfig,
    threshold: float,
    replicates: int = 400,
    t_max: int = 10000,
    seed: int = 0,
    workers: int = 1,
) -> CalibrationResult:
    """Average run length to false alarm under the no-change stream.

    Runs truncated at t_max contribute t_max, which biases the estimate
    downward; truncations are counted and flagged in warnings.
    """
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    if t_max < 1:
        raise ConfigError(f"t_max must be >= 1, got {t_max}")

    def one(i):
        st = _run_replicate(config, threshold, _replicate_rng(seed, i), t_max)
        return t_max if st is None else st, st is None

    results = _map_replicates(one, replicates, workers)
    lengths = np.array([r[0] for r in results], dtype=np.float64)
    truncated = sum(1 for r in results if r[1])
    arl = float(lengths.mean())
    se = float(lengths.std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else 0.0
    warnings = []
    if truncated:
        warnings.append(
            f"{truncated} of {replicates} replicates ran to the truncation horizon "
            f"{t_max} without stopping; the ARL estimate is biased downward"
        )
    return CalibrationResult(
        threshold=float(threshold),
        arl_estimate=arl,
        standard_error=se,
        replicates=replicates,
        truncation_horizon=t_max,
        truncated_runs=truncated,
        warnings=warnings,
        lengths=lengths,
    )


def calibrate_threshold(
    config: DetectorConfig,
    target_arl: float,
    tolerance: float = 0.1,
    replicates: int = 400,
    t_max: int | None = None,
    seed: int = 0,
    workers: int = 1,
    max_expand: int = 60,
    max_iter: int = 60,
) -> CalibrationResult:
    """Bisect for the threshold whose ARL matches target_arl.

    Common random numbers across candidate thresholds keep the estimated
    ARL monotone along the search.  Stops when the estimate lands within
    tolerance*target of the target, or — with a warning — once the target
    sits inside the estimate's 95% interval while still outside the
    tolerance band (more bisection cannot beat the Monte Carlo noise).
    If the search cannot converge (e.g. the ARL jumps discontinuously in
    b), the over-target endpoint is returned with a warning rather than a
    threshold that under-delivers on false-alarm protection.
    """
    if not (target_arl >= 1.0 and np.isfinite(target_arl)):
        raise ConfigError(f"target ARL must be finite and >= 1, got {target_arl}")
    if not (0.0 < tolerance < 1.0):
        raise ConfigError(f"tolerance must be in (0, 1), got {tolerance}")
    if t_max is None:
        t_max = int(np.ceil(20.0 * target_arl))
    band = tolerance * target_arl
    cache: dict[float, CalibrationResult] = {}

    def ev(b: float) -> CalibrationResult:
        if b not in cache:
            cache[b] = estimate_arl(
                config, b, replicates=replicates, t_max=t_max, seed=seed, workers=workers
            )
        return cache[b]

    def finalize(res: CalibrationResult, converged: bool, extra=None) -> CalibrationResult:
        res.converged = converged
        if extra:
            res.warnings = list(res.warnings) + [extra]
        return res

    lo, hi = 0.0, max(1.0, float(np.log(target_arl)))
    spent = 0
    while ev(lo).arl_estimate > target_arl:
        hi = lo
        lo = -1.0 if lo == 0.0 else 2.0 * lo
        spent += 1
        if spent > max_expand:
            raise CalibrationError(
                f"could not bracket target ARL {target_arl} from below; "
                f"ARL({lo}) is still above target"
            )
    while ev(hi).arl_estimate <= target_arl:
        lo = hi
        hi = 2.0 * hi if hi > 0.0 else 1.0
        spent += 1
        if spent > max_expand:
            raise CalibrationError(
                f"could not bracket target ARL {target_arl} from above; "
                f"ARL({hi}) is still at or below target"
            )
    for b in (lo, hi):
        r = ev(b)
        if abs(r.arl_estimate - target_arl) <= band:
            return finalize(r, True)

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:  # interval exhausted at float resolution
            break
        r = ev(mid)
        gap = abs(r.arl_estimate - target_arl)
        if gap <= band:
            return finalize(r, True)
        if gap <= 1.96 * r.standard_error:
            return finalize(
                r,
                False,
                "monte carlo 95% interval exceeds the tolerance band "
                f"(+/-{1.96 * r.standard_error:.3g} vs +/-{band:.3g}); "
                "increase replicates to refine further",
            )
        if r.arl_estimate < target_arl:
            lo = mid
        else:
            hi = mid

    return finalize(
        ev(hi),
        False,
        "bisection exhausted without reaching the tolerance band; returning the "
        "conservative endpoint whose estimated ARL is above target",
    )


def estimate_edd(
    config: DetectorConfig,
    threshold: float,
    spec: StreamSpec,
    replicates: int = 400,
    workers: int = 1,
) -> EddResult:
    """Expected detection delay with the change active from the first sample.

    spec must carry change_point=0; spec.horizon truncates each run and
    spec.seed is the master seed.  The mean is over stopped runs only,
    with unstopped runs counted and flagged.
    """
    if spec.change_point != 0:
        raise ConfigError("EDD streams must have change_point=0 (shift active from sample 1)")
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    if spec.dim != config.dim:
        raise ConfigError(
            f"stream dimension {spec.dim} does not match detector dimension {config.dim}"
        )

    def one(i):
        rng = _replicate_rng(spec.seed, i)
        return _run_replicate(config, threshold, rng, spec.horizon, shift=spec.mean_shift)

    stops = _map_replicates(one, replicates, workers)
    delays = np.array([s for s in stops if s is not None], dtype=np.float64)
    n_stop = delays.size
    warnings = []
    if n_stop < replicates:
        warnings.append(
            f"{replicates - n_stop} of {replicates} replicates never crossed the "
            f"threshold within horizon {spec.horizon}; the delay estimate is "
            "conditioned on stopping and biased downward"
        )
    if n_stop == 0:
        mean = float("nan")
        se = float("nan")
    else:
        mean = float(delays.mean())
        se = float(delays.std(ddof=1) / np.sqrt(n_stop)) if n_stop > 1 else 0.0
    return EddResult(
        mean_delay=mean,
        standard_error=se,
        stopped_runs=n_stop,
        replicates=replicates,
        horizon=spec.horizon,
        threshold=float(threshold),
        warnings=warnings,
        delays=delays,
    )
