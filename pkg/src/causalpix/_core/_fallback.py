"""Pure-NumPy implementations of the hot pixel kernels.

Used when the compiled extension is unavailable (or disabled via the
CAUSALPIX_NO_EXT environment variable).  Semantics are identical to
``_kernels.pyx``; the test suite asserts agreement.
"""

from __future__ import annotations

import numpy as np


def cell_match_ssd(cells: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Sum-of-squared-differences between every cell and every template.

    cells: (N, D) flattened image patches.
    templates: (M, D) flattened candidate patches.
    Returns (N, M) float64.  Accumulation is in float64, so for 8-bit
    pixel data the result is exact and backend-independent.
    """
    cells = np.ascontiguousarray(cells, dtype=np.float64)
    templates = np.ascontiguousarray(templates, dtype=np.float64)
    n, m = cells.shape[0], templates.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    for j in range(m):
        d = cells - templates[j]
        out[:, j] = np.einsum("nd,nd->n", d, d)
    return out


def frame_mean_abs_diff(frames: np.ndarray) -> np.ndarray:
    """Mean absolute difference between consecutive frames.

    frames: (F, P) flattened frames; returns (F-1,) float64.
    """
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    if frames.shape[0] < 2:
        return np.zeros(0, dtype=np.float64)
    return np.abs(np.diff(frames, axis=0)).mean(axis=1)
