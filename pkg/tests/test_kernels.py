"""Backend-agreement and correctness tests for the pixel kernels."""

import importlib

import numpy as np
import pytest

from causalpix import _core
from causalpix._core import _fallback
from oracles import brute_cell_ssd, brute_frame_diffs


def _compiled():
    try:
        return importlib.import_module("causalpix._core._kernels")
    except ImportError:
        return None


BACKENDS = [("fallback", _fallback)]
if _compiled() is not None:
    BACKENDS.append(("cython", _compiled()))


@pytest.mark.parametrize("name,mod", BACKENDS, ids=[b[0] for b in BACKENDS])
class TestCellMatchSSD:
    def test_matches_brute_force(self, name, mod, rng):
        cells = rng.integers(0, 256, size=(12, 48)).astype(np.float64)
        templates = rng.integers(0, 256, size=(7, 48)).astype(np.float64)
        assert np.allclose(mod.cell_match_ssd(cells, templates), brute_cell_ssd(cells, templates))

    def test_zero_for_identical(self, name, mod, rng):
        t = rng.integers(0, 256, size=(5, 30)).astype(np.float64)
        out = mod.cell_match_ssd(t, t)
        assert np.allclose(np.diag(out), 0.0)

    def test_shape_mismatch(self, name, mod):
        with pytest.raises(ValueError):
            mod.cell_match_ssd(np.zeros((2, 4)), np.zeros((2, 5)))


@pytest.mark.parametrize("name,mod", BACKENDS, ids=[b[0] for b in BACKENDS])
class TestFrameMeanAbsDiff:
    def test_matches_brute_force(self, name, mod, rng):
        frames = rng.integers(0, 256, size=(20, 64)).astype(np.float64)
        assert np.allclose(mod.frame_mean_abs_diff(frames), brute_frame_diffs(frames))

    def test_single_frame(self, name, mod):
        assert len(mod.frame_mean_abs_diff(np.zeros((1, 8)))) == 0

    def test_constant_sequence(self, name, mod):
        frames = np.full((5, 16), 7.0)
        assert np.array_equal(mod.frame_mean_abs_diff(frames), np.zeros(4))


@pytest.mark.skipif(_compiled() is None, reason="compiled extension unavailable")
class TestBackendAgreement:
    def test_cell_ssd_bit_identical(self, rng):
        """On 8-bit pixel data both backends accumulate in float64 and
        must agree exactly, not just approximately."""
        compiled = _compiled()
        cells = rng.integers(0, 256, size=(64, 192)).astype(np.float64)
        templates = rng.integers(0, 256, size=(65, 192)).astype(np.float64)
        assert np.array_equal(
            _fallback.cell_match_ssd(cells, templates), compiled.cell_match_ssd(cells, templates)
        )

    def test_frame_diff_bit_identical(self, rng):
        compiled = _compiled()
        frames = rng.integers(0, 256, size=(50, 1024)).astype(np.float64)
        assert np.array_equal(
            _fallback.frame_mean_abs_diff(frames), compiled.frame_mean_abs_diff(frames)
        )


def test_backend_selection_reported():
    assert _core.BACKEND in ("cython", "numpy")


def test_env_override_forces_fallback(monkeypatch):
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "from causalpix._core import BACKEND; print(BACKEND)"],
        env={"CAUSALPIX_NO_EXT": "1", "PATH": "/usr/bin:/bin"},
        capture_output=True,
        text=True,
    )
    assert out.stdout.strip() == "numpy"
