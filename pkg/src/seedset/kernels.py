"""Kernel backend selection.

The compiled extension is used when it imports; setting ``SEEDSET_PURE_PYTHON=1``
forces the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("SEEDSET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

block_logdets = _impl.block_logdets
group_covariance = _impl.group_covariance
chisq_logsf = _impl.chisq_logsf

__all__ = ["BACKEND", "block_logdets", "group_covariance", "chisq_logsf"]
