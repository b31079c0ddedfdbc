"""Kernel backend selection.

The compiled extension is preferred. Set ``IQPPHASE_PURE_PYTHON=1`` to force
the NumPy fallback (useful for benchmarking or when the extension was not built).
"""
import os

if os.environ.get("IQPPHASE_PURE_PYTHON"):
    from . import _pykernels as kernels

    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels

        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as kernels

        BACKEND = "python"

fwht_inplace = kernels.fwht_inplace
phase_vector = kernels.phase_vector
