"""shiftscan: streaming detection of sparse mean shifts in high-dimensional
Gaussian sequences.

Adaptive window-limited detectors (max- and sum-combined) with one-sample
online mirror-descent mean estimates, classical MCUSUM and window-limited
GLR baselines, Monte Carlo threshold calibration, and frame-preprocessing
pipelines for real-space and diffraction imagery.
"""

__version__ = "0.1.0"

from .backend import active_backend
from .calibrate import (
    CalibrationResult,
    EddResult,
    StreamSpec,
    calibrate_threshold,
    estimate_arl,
    estimate_edd,
    generate_stream,
    sparse_mean,
)
from .detectors import (
    AdaptiveCusum,
    AdaptiveShiryaevRoberts,
    DetectionReport,
    DetectorConfig,
    HypothesisState,
    MultivariateCusum,
    WindowGlr,
    run_detector,
)
from .errors import (
    CalibrationError,
    ConfigError,
    DataError,
    DetectorStoppedError,
    DimensionMismatchError,
    EmptyImageError,
    NoRingError,
    NumericError,
    ShiftScanError,
)
from .lrcore import log_lr_increment, loss, loss_gradient
from .omd import (
    ConstraintSet,
    EstimatorState,
    StepSchedule,
    omd_update,
    project_l1,
    step_size,
)

__all__ = [
    "__version__",
    "active_backend",
    "AdaptiveCusum",
    "AdaptiveShiryaevRoberts",
    "CalibrationError",
    "CalibrationResult",
    "ConfigError",
    "ConstraintSet",
    "DataError",
    "DetectionReport",
    "DetectorConfig",
    "DetectorStoppedError",
    "DimensionMismatchError",
    "EddResult",
    "EmptyImageError",
    "EstimatorState",
    "HypothesisState",
    "MultivariateCusum",
    "NoRingError",
    "NumericError",
    "ShiftScanError",
    "StepSchedule",
    "StreamSpec",
    "WindowGlr",
    "calibrate_threshold",
    "estimate_arl",
    "estimate_edd",
    "generate_stream",
    "log_lr_increment",
    "loss",
    "loss_gradient",
    "omd_update",
    "project_l1",
    "run_detector",
    "sparse_mean",
    "step_size",
]
