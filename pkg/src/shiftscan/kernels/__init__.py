"""Backend dispatch for the hot kernels.

Two interchangeable implementations exist: ``numpy`` (always available)
and ``numba`` (used by default when importable).  Selection follows the
SHIFTSCAN_BACKEND environment variable resolved in :mod:`shiftscan.backend`;
``get_impl`` also accepts an explicit name so tests can pin both.
"""

from .. import backend
from ..errors import ConfigError

_impls = {}


def get_impl(name=None):
    """Return the kernel module for `name` (None/"auto" = resolved default)."""
    if name is None or name == "auto":
        name = backend.ACTIVE_BACKEND
    if name not in _impls:
        if name == "numpy":
            from . import numpy_impl as mod
        elif name == "numba":
            if not backend.NUMBA_AVAILABLE:
                raise ConfigError("numba backend requested but numba is not importable")
            from . import numba_impl as mod
        else:
            raise ConfigError(f"unknown backend {name!r}; expected 'numba', 'numpy', or 'auto'")
        _impls[name] = mod
    return _impls[name]
