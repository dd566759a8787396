"""Benchmark the compiled pixel kernels against the NumPy fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import importlib
import time

import numpy as np

from causalpix._core import BACKEND, _fallback


def _load_compiled():
    try:
        return importlib.import_module("causalpix._core._kernels")
    except ImportError:
        return None


def _time(fn, *args, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    rng = np.random.default_rng(0)
    compiled = _load_compiled()
    print(f"active backend: {BACKEND}")
    if compiled is None:
        print("compiled extension not available; showing fallback timings only")

    # cell_match_ssd at decode scale: 64 cells x 8x8x3 against 65 templates
    cells = rng.integers(0, 256, size=(64, 192)).astype(np.float64)
    templates = rng.integers(0, 256, size=(65, 192)).astype(np.float64)
    t_fb = _time(_fallback.cell_match_ssd, cells, templates, repeats=20)
    line = f"cell_match_ssd   64x192 vs 65   fallback {t_fb * 1e6:9.1f} us"
    if compiled is not None:
        t_c = _time(compiled.cell_match_ssd, cells, templates, repeats=20)
        exact = np.array_equal(
            _fallback.cell_match_ssd(cells, templates), compiled.cell_match_ssd(cells, templates)
        )
        line += f"   compiled {t_c * 1e6:9.1f} us   speedup {t_fb / t_c:5.2f}x   exact={exact}"
    print(line)

    # frame_mean_abs_diff at segmentation scale: 2,000 frames of 32x32
    frames = rng.integers(0, 256, size=(2000, 1024)).astype(np.float64)
    t_fb = _time(_fallback.frame_mean_abs_diff, frames)
    line = f"frame_mean_abs_diff 2000x1024  fallback {t_fb * 1e6:9.1f} us"
    if compiled is not None:
        t_c = _time(compiled.frame_mean_abs_diff, frames)
        exact = np.array_equal(
            _fallback.frame_mean_abs_diff(frames), compiled.frame_mean_abs_diff(frames)
        )
        line += f"   compiled {t_c * 1e6:9.1f} us   speedup {t_fb / t_c:5.2f}x   exact={exact}"
    print(line)


if __name__ == "__main__":
    main()
