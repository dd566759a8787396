"""Hot pixel kernels: compiled extension when built, NumPy fallback
otherwise.  Set CAUSALPIX_NO_EXT=1 to force the fallback."""

import os

from . import _fallback

if os.environ.get("CAUSALPIX_NO_EXT"):
    _impl = _fallback
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "numpy"

cell_match_ssd = _impl.cell_match_ssd
frame_mean_abs_diff = _impl.frame_mean_abs_diff

__all__ = ["BACKEND", "cell_match_ssd", "frame_mean_abs_diff"]
