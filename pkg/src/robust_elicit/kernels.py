"""Backend selection for the hot loops.

The compiled extension ``robust_elicit._core`` is used when it imports;
otherwise (or when ``ROBUST_ELICIT_PURE`` is set) the numpy fallback is used.
Both backends agree to rounding level; ``tests/test_kernels.py`` checks this.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("ROBUST_ELICIT_PURE"):
        raise ImportError("pure backend requested")
    from . import _core as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

weighted_cd = _impl.weighted_cd
pair_counts = _impl.pair_counts

__all__ = ["BACKEND", "weighted_cd", "pair_counts"]
