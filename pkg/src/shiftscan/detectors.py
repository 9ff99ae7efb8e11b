"""Streaming change detectors over unit-variance Gaussian observations.

All four detectors share the same driving loop: feed observations, read a
scalar statistic per step, stop the first time it exceeds the threshold.
Everything is carried in the log domain; raw likelihood ratios are never
formed (they overflow at realistic dimensions long before any alarm).

The adaptive pair (max- and sum-combined) keeps one hypothesis per
candidate change time k in the trailing window, each with its own
mirror-descent mean estimate that has only seen samples k..t.  MCUSUM is
the classical reflected recursion against a fixed alternative; the GLR
detector plugs the within-window sample mean into the likelihood ratio
exactly, at O(w d) per step.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    DetectorStoppedError,
    DimensionMismatchError,
    NumericError,
)
from .omd import ConstraintSet, EstimatorState, StepSchedule

_BLOCK_ELEMS = 1 << 21  # ~16 MB of float64 per feed block


@dataclass
class HypothesisState:
    """One candidate change time: birth k, its estimator, and log Lambda_{k,t}."""

    birth: int
    estimator: EstimatorState
    log_lambda: float


class Detector:
    """Shared state machine: update -> statistic -> stop on first crossing."""

    kind = "base"

    def __init__(self, dim: int, window: int, threshold: float, backend=None):
        if dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {dim}")
        if window < 1:
            raise ConfigError(f"window must be >= 1, got {window}")
        threshold = float(threshold)
        if np.isnan(threshold):
            raise ConfigError("threshold must not be NaN")
        self.dim = dim
        self.window = window
        self.threshold = threshold
        self._impl = kernels.get_impl(backend)
        self.t = 0
        self.stopped = False
        self.stop_time = None
        self.last_statistic = None
        self.last_change_point = None

    @property
    def backend_name(self) -> str:
        return self._impl.NAME

    @property
    def status(self) -> str:
        return f"stopped(at={self.stop_time})" if self.stopped else "running"

    def _run(self, X, stats, khats) -> int:
        raise NotImplementedError

    def update_block(self, X):
        """Consume observations row by row until the block ends or we stop.

        Returns (stats, khats): the per-step statistic and change-point
        estimate for each consumed row.  len(stats) < len(X) exactly when
        the statistic crossed the threshold mid-block; once stopped,
        further updates raise DetectorStoppedError.
        """
        if self.stopped:
            raise DetectorStoppedError(f"detector already stopped at t={self.stop_time}")
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2:
            raise ConfigError(f"expected a (n, d) block, got ndim={X.ndim}")
        if X.shape[1] != self.dim:
            raise DimensionMismatchError(self.dim, X.shape[1], what="observation")
        if not np.isfinite(X).all():
            raise NumericError("observations must be finite")
        n = X.shape[0]
        stats = np.empty(n, dtype=np.float64)
        khats = np.empty(n, dtype=np.int64)
        consumed = self._run(X, stats, khats)
        self.t += consumed
        if consumed:
            self.last_statistic = float(stats[consumed - 1])
            k = int(khats[consumed - 1])
            self.last_change_point = k if k > 0 else None
            if self.last_statistic > self.threshold:
                self.stopped = True
                self.stop_time = self.t
        return stats[:consumed], khats[:consumed]

    def update(self, x) -> float:
        """Feed one observation; returns the new statistic value."""
        stats, _ = self.update_block(np.asarray(x, dtype=np.float64).reshape(1, -1))
        return float(stats[-1])

    def change_point_estimate(self):
        """Most recent maximizing candidate change time (None for MCUSUM)."""
        return self.last_change_point


class AdaptiveCusum(Detector):
    """Window-limited CUSUM with per-hypothesis adaptive mean estimates.

    Statistic: max over active k of log Lambda_{k,t}, where each factor in
    Lambda uses the estimate built from samples k..t-1 only (predictable
    plug-in), updated by online mirror descent after scoring.
    """

    kind = "acm"
    _use_sum = False

    def __init__(
        self,
        dim: int,
        window: int = 50,
        threshold: float = np.inf,
        schedule: StepSchedule | None = None,
        constraint: ConstraintSet | None = None,
        backend=None,
    ):
        super().__init__(dim, window, threshold, backend=backend)
        self.schedule = schedule if schedule is not None else StepSchedule()
        self.constraint = constraint if constraint is not None else ConstraintSet.unconstrained()
        W = window + 1
        self._theta = np.zeros((W, dim), dtype=np.float64)
        self._loglam = np.zeros(W, dtype=np.float64)
        self._birth = np.zeros(W, dtype=np.int64)

    def _run(self, X, stats, khats) -> int:
        return self._impl.adaptive_run(
            X,
            self._theta,
            self._loglam,
            self._birth,
            self.t,
            self.window,
            self._use_sum,
            self.schedule.code,
            self.schedule.scale,
            self.constraint.kernel_radius,
            self.threshold,
            stats,
            khats,
        )

    def hypotheses(self) -> list[HypothesisState]:
        """Live snapshot of the active hypotheses, oldest first."""
        out = []
        for slot in np.argsort(self._birth):
            k = int(self._birth[slot])
            if k <= 0:
                continue
            est = EstimatorState(
                theta_hat=self._theta[slot].copy(), steps_taken=self.t - k + 1
            )
            out.append(HypothesisState(birth=k, estimator=est, log_lambda=float(self._loglam[slot])))
        return out


class AdaptiveShiryaevRoberts(AdaptiveCusum):
    """Same hypothesis bank; combines by log-sum instead of max.

    The sum runs over the same window-limited candidates, computed as a
    max-shifted log-sum-exp so it stays finite at any dimension.
    """

    kind = "asr"
    _use_sum = True


class MultivariateCusum(Detector):
    """Reflected CUSUM against one fixed post-change mean (default all-ones).

    S_t = max(0, S_{t-1} + logLR(theta1, x_t)); no window, no change-point
    estimate.  Mis-specified theta1 costs dearly at high dimension: the
    -||theta1||^2/2 drag scales with d while the signal term does not.
    """

    kind = "mcusum"

    def __init__(self, dim: int, threshold: float = np.inf, reference_mean=None, backend=None):
        super().__init__(dim, window=1, threshold=threshold, backend=backend)
        if reference_mean is None:
            ref = np.ones(dim, dtype=np.float64)
        else:
            ref = np.ascontiguousarray(reference_mean, dtype=np.float64)
            if ref.shape != (dim,):
                raise DimensionMismatchError(dim, ref.shape[0], what="reference mean")
            if not np.isfinite(ref).all():
                raise ConfigError("reference mean must be finite")
        self.reference_mean = ref
        self._s = 0.0

    def _run(self, X, stats, khats) -> int:
        consumed, s_end = self._impl.mcusum_run(
            X, self.reference_mean, self._s, self.threshold, stats
        )
        self._s = s_end
        khats[:consumed] = 0  # no candidate change times
        return consumed

    @property
    def statistic(self) -> float:
        return self._s


class WindowGlr(Detector):
    """Window-limited GLR: exact sample-mean MLE per candidate change time.

    Statistic: max over window k of (t - k + 1) ||mean(X_k..X_t)||^2 / 2.
    Quadratic in the window mean, so single outliers score against every
    candidate at once; the classical false-alarm-prone baseline.
    """

    kind = "glr"

    def __init__(self, dim: int, window: int = 50, threshold: float = np.inf, backend=None):
        super().__init__(dim, window, threshold, backend=backend)
        self._ring = np.zeros((window + 1, dim), dtype=np.float64)

    def _run(self, X, stats, khats) -> int:
        return self._impl.glr_run(
            X, self._ring, self.t, self.window, self.threshold, stats, khats
        )


_DETECTOR_KINDS = ("acm", "asr", "mcusum", "glr")


@dataclass
class DetectorConfig:
    """Declarative detector description; build() attaches a threshold.

    Exists so calibration and the CLI can construct many identical
    detectors (one per Monte Carlo replicate) from one value.
    """

    kind: str
    dim: int
    window: int = 50
    schedule: StepSchedule = field(default_factory=StepSchedule)
    constraint: ConstraintSet = field(default_factory=ConstraintSet.unconstrained)
    reference_mean: np.ndarray | None = None
    backend: str | None = None

    def __post_init__(self):
        if self.kind not in _DETECTOR_KINDS:
            raise ConfigError(
                f"unknown detector kind {self.kind!r}; expected one of {_DETECTOR_KINDS}"
            )
        if self.dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dim}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")

    def build(self, threshold: float) -> Detector:
        if self.kind == "acm":
            return AdaptiveCusum(
                self.dim,
                self.window,
                threshold,
                schedule=self.schedule,
                constraint=self.constraint,
                backend=self.backend,
            )
        if self.kind == "asr":
            return AdaptiveShiryaevRoberts(
                self.dim,
                self.window,
                threshold,
                schedule=self.schedule,
                constraint=self.constraint,
                backend=self.backend,
            )
        if self.kind == "mcusum":
            return MultivariateCusum(
                self.dim, threshold, reference_mean=self.reference_mean, backend=self.backend
            )
        return WindowGlr(self.dim, self.window, threshold, backend=self.backend)

    def describe(self) -> dict:
        """JSON-friendly echo of every knob that affects results."""
        doc = {"kind": self.kind, "dim": self.dim}
        if self.kind in ("acm", "asr"):
            doc["window"] = self.window
            doc["schedule"] = {"kind": self.schedule.kind, "scale": self.schedule.scale}
            doc["constraint"] = {"kind": self.constraint.kind, "radius": self.constraint.radius}
        elif self.kind == "glr":
            doc["window"] = self.window
        else:
            ref = self.reference_mean
            doc["reference_mean"] = "ones" if ref is None else [float(v) for v in ref]
        return doc


@dataclass
class DetectionReport:
    """Outcome of one detector run over one stream."""

    stopped: bool
    stop_time: int | None
    change_point_estimate: int | None
    samples_consumed: int
    final_statistic: float | None
    threshold: float
    detector_kind: str
    trace: np.ndarray  # rows (t, statistic, khat); khat 0 when undefined

    def to_dict(self) -> dict:
        return {
            "stopped": self.stopped,
            "stop_time": self.stop_time,
            "change_point_estimate": self.change_point_estimate,
            "samples_consumed": self.samples_consumed,
            "final_statistic": self.final_statistic,
            "threshold": self.threshold,
            "detector_kind": self.detector_kind,
        }


def run_detector(stream, detector: Detector, trace_every: int = 1, max_steps=None) -> DetectionReport:
    """Drive a detector over a stream until it stops or data runs out.

    stream: (T, d) array or any iterable of length-d vectors.  Keeps every
    trace_every-th statistic (t = 1, 1+trace_every, ...) plus the stop
    step.  An empty stream reports cleanly with an empty trace.
    """
    if trace_every < 1:
        raise ConfigError(f"trace_every must be >= 1, got {trace_every}")
    t_start = detector.t
    rows = []

    def feed(block):
        stats, khats = detector.update_block(block)
        base = detector.t - len(stats)
        for i in range(len(stats)):
            t = base + i + 1
            last = detector.stopped and i == len(stats) - 1
            if (t - t_start - 1) % trace_every == 0 or last:
                rows.append((t, stats[i], khats[i]))

    block_rows = max(1, _BLOCK_ELEMS // max(detector.dim, 1))
    consumed_cap = max_steps if max_steps is not None else None
    if isinstance(stream, np.ndarray):
        T = stream.shape[0] if consumed_cap is None else min(stream.shape[0], consumed_cap)
        pos = 0
        while pos < T and not detector.stopped:
            feed(stream[pos : min(pos + block_rows, T)])
            pos = detector.t - t_start
    else:
        buf = []

        def flush():
            nonlocal buf
            if consumed_cap is not None:
                buf = buf[: consumed_cap - (detector.t - t_start)]
            if buf:
                feed(np.stack(buf))
            buf = []

        for x in stream:
            buf.append(np.asarray(x, dtype=np.float64))
            done = consumed_cap is not None and detector.t - t_start + len(buf) >= consumed_cap
            if len(buf) >= block_rows or done:
                flush()
                if detector.stopped or done:
                    break
        if buf and not detector.stopped:
            flush()

    consumed = detector.t - t_start
    if rows:
        trace = np.array(rows, dtype=np.float64)
    else:
        trace = np.empty((0, 3), dtype=np.float64)
    return DetectionReport(
        stopped=detector.stopped,
        stop_time=detector.stop_time,
        change_point_estimate=detector.change_point_estimate() if detector.stopped else None,
        samples_consumed=consumed,
        final_statistic=detector.last_statistic,
        threshold=detector.threshold,
        detector_kind=detector.kind,
        trace=trace,
    )
