"""One-sample-update mean estimation by online mirror descent.

Under the squared-loss geometry used here the unconstrained mirror step
collapses to a convex combination ``theta - eta * (theta - x)``, so with
the inverse-count schedule at scale 1 the estimate is exactly the running
sample mean.  An optional l1-ball constraint is enforced by Euclidean
projection after every step, which is what makes the estimators track
sparse shifts without touching the step size.

Each detector hypothesis owns one EstimatorState; the step-size index is
that hypothesis's own sample count, not the global stream time.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionMismatchError, NumericError

SCHEDULE_KINDS = ("inverse-count", "constant", "inverse-sqrt")
_SCHEDULE_CODES = {name: code for code, name in enumerate(SCHEDULE_KINDS)}


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule eta_i for the i-th sample seen by one hypothesis.

    kinds: "inverse-count" -> min(1, scale/i); "constant" -> scale;
    "inverse-sqrt" -> min(1, scale/sqrt(i)).  All are positive and
    non-increasing in i.
    """

    kind: str = "inverse-count"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(
                f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}"
            )
        if not (self.scale > 0.0 and np.isfinite(self.scale)):
            raise ConfigError(f"schedule scale must be positive and finite, got {self.scale}")

    @property
    def code(self) -> int:
        """Integer code consumed by the kernels."""
        return _SCHEDULE_CODES[self.kind]


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible set for the mean estimate: an l1 ball or nothing."""

    kind: str = "unconstrained"
    radius: float | None = None

    def __post_init__(self):
        if self.kind == "unconstrained":
            if self.radius is not None:
                raise ConfigError("unconstrained set takes no radius")
        elif self.kind == "l1-ball":
            if self.radius is None or not (self.radius > 0.0 and np.isfinite(self.radius)):
                raise ConfigError(f"l1 ball needs a positive finite radius, got {self.radius}")
        else:
            raise ConfigError(f"unknown constraint kind {self.kind!r}")

    @classmethod
    def l1_ball(cls, radius: float) -> "ConstraintSet":
        return cls(kind="l1-ball", radius=float(radius))

    @classmethod
    def unconstrained(cls) -> "ConstraintSet":
        return cls()

    @property
    def kernel_radius(self) -> float:
        """Radius for the kernels; <= 0 encodes 'no constraint'."""
        return self.radius if self.kind == "l1-ball" else -1.0


@dataclass
class EstimatorState:
    """Current mean estimate of one hypothesis and its sample count."""

    theta_hat: np.ndarray
    steps_taken: int = 0

    @classmethod
    def fresh(cls, dim: int) -> "EstimatorState":
        if dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {dim}")
        return cls(theta_hat=np.zeros(dim, dtype=np.float64), steps_taken=0)


def step_size(schedule: StepSchedule, i: int) -> float:
    """eta_i for sample index i >= 1."""
    if i < 1:
        raise ConfigError(f"step index must be >= 1, got {i}")
    if schedule.kind == "constant":
        return schedule.scale
    if schedule.kind == "inverse-count":
        return min(1.0, schedule.scale / i)
    return min(1.0, schedule.scale / np.sqrt(i))


def project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of v onto the l1 ball of the given radius.

    Points already inside come back as an unchanged copy, so the
    projection is exactly idempotent.
    """
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ConfigError(f"expected a vector, got ndim={v.ndim}")
    if not (radius > 0.0 and np.isfinite(radius)):
        raise ConfigError(f"radius must be positive and finite, got {radius}")
    if not np.isfinite(v).all():
        raise NumericError("cannot project a vector with non-finite entries")
    return kernels.get_impl().project_l1(v, radius)


def omd_update(
    state: EstimatorState,
    x: np.ndarray,
    schedule: StepSchedule,
    constraint: ConstraintSet = ConstraintSet(),
) -> EstimatorState:
    """One mirror-descent step on the new observation x.

    Returns a fresh state; the input state is not mutated.  With the
    inverse-count schedule at scale 1 and no constraint this reproduces
    the running sample mean exactly.
    """
    theta = state.theta_hat
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != theta.shape:
        raise DimensionMismatchError(theta.shape[0], x.shape[0], what="observation")
    eta = step_size(schedule, state.steps_taken + 1)
    tilde = theta - eta * (theta - x)
    if not np.isfinite(tilde).all():
        raise NumericError("mirror-descent step produced non-finite values")
    if constraint.kind == "l1-ball":
        n1 = float(np.abs(tilde).sum())
        if n1 > constraint.radius:
            tilde = kernels.get_impl().project_l1(tilde, constraint.radius)
    return EstimatorState(theta_hat=tilde, steps_taken=state.steps_taken + 1)
