"""Compute-backend selection.

The hot kernels exist twice: a numba @njit build and a pure-numpy build with
identical semantics.  Selection is a performance concern only -- it never
changes what is computed, just how fast -- so it lives in an environment
variable rather than in run configuration:

    SHIFTSCAN_BACKEND=auto   use numba if importable, else numpy (default)
    SHIFTSCAN_BACKEND=numba  require numba, fail loudly if missing
    SHIFTSCAN_BACKEND=numpy  force the pure-numpy path

The active backend name is recorded in every output report, so runs remain
self-describing.
"""

import os

from .errors import ConfigError

ENV_VAR = "SHIFTSCAN_BACKEND"

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    NUMBA_AVAILABLE = False


def _resolve(name: str) -> str:
    if name == "auto":
        return "numba" if NUMBA_AVAILABLE else "numpy"
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise ConfigError(
                f"{ENV_VAR}=numba requested but numba is not importable"
            )
        return "numba"
    if name == "numpy":
        return "numpy"
    raise ConfigError(
        f"{ENV_VAR}={name!r} not understood; expected auto, numba or numpy"
    )


ACTIVE_BACKEND = _resolve(os.environ.get(ENV_VAR, "auto"))


def active_backend() -> str:
    """Name of the backend selected at import time ('numba' or 'numpy')."""
    return ACTIVE_BACKEND
