"""Kernel backend selection.

The compiled kernels are used when importable; otherwise the NumPy
reference implementation.  Set ``BUTTERFLY_FWM_BACKEND=python`` to force
the fallback.
"""
import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

_requested = os.environ.get("BUTTERFLY_FWM_BACKEND", "").strip().lower()
if _requested not in ("", "auto", "python", "cython"):
    raise ImportError(f"unknown BUTTERFLY_FWM_BACKEND {_requested!r}")
if _requested == "cython" and compiled_kernels is None:
    raise ImportError("BUTTERFLY_FWM_BACKEND=cython but the compiled kernels are not built")

if _requested == "python" or compiled_kernels is None:
    kernels = _pykernels
else:
    kernels = compiled_kernels

BACKEND = kernels.BACKEND


def get_kernels(name=None):
    """Return the kernel module for ``name`` ('python', 'cython' or None for the default)."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not available")
        return compiled_kernels
    raise ValueError(f"unknown backend {name!r}")
