"""Backend selection for the time-stepping kernel.

The compiled extension is used when it imports; setting the environment
variable ``HEATSTAB_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("HEATSTAB_PURE_PYTHON", "") != "1":
    BACKEND = "cython"
    march = _compiled.march
else:
    BACKEND = "python"
    march = _kernels_py.march


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_march(backend=None):
    if backend is None:
        return march
    if backend == "python":
        return _kernels_py.march
    if backend == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel not available")
        return _compiled.march
    raise ValueError(f"unknown backend {backend!r}")
