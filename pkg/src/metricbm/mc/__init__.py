"""Monte Carlo simulation of Brownian motion on metric graphs.

The path kernel is compiled when the extension is available and falls back
to the pure-Python reference otherwise. Set ``METRICBM_BACKEND=python`` to
force the fallback.
"""

import os

from . import _pykernel

BACKEND = "python"
_kernel = _pykernel
if os.environ.get("METRICBM_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _ckernel
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        _kernel = _ckernel


def get_kernel(backend: str | None = None):
    """Return the kernel module for ``backend`` ('python', 'cython' or None)."""
    if backend is None:
        return _kernel
    if backend == "python":
        return _pykernel
    if backend == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
