"""Kernel backend selection.

The compiled Cython kernels are used when the extension was built; otherwise
the NumPy implementation takes over.  Set ``VISCOGRID_KERNELS=numpy`` (or
``cython``) to force a backend; forcing an unavailable one is an error.
"""

import os

from . import _kernels_np

_BACKENDS = {"numpy": _kernels_np}
try:
    from . import _kernels_cy
    _BACKENDS["cython"] = _kernels_cy
except ImportError:
    pass

_requested = os.environ.get("VISCOGRID_KERNELS", "").strip().lower()
if _requested:
    if _requested not in _BACKENDS:
        raise ImportError(
            f"VISCOGRID_KERNELS={_requested!r} not available; "
            f"built backends: {sorted(_BACKENDS)}")
    BACKEND = _requested
else:
    BACKEND = "cython" if "cython" in _BACKENDS else "numpy"

_active = _BACKENDS[BACKEND]
energy_sum = _active.energy_sum
gradient_scatter = _active.gradient_scatter


def available_backends():
    return sorted(_BACKENDS)


def backend(name):
    """Module implementing the kernel contract for an explicit backend name."""
    return _BACKENDS[name]
