import numpy as np
import pytest
import torch

from causalpix.encoders import Vocab
from causalpix.evalsuite.embedder import train_embedder
from causalpix.evalsuite.pipeline import contact_sheet, generate_candidates, score_candidates
from causalpix.evalsuite.report import TOTAL
from causalpix.training import CausalPixModel


@pytest.fixture(scope="module")
def model(small_run_config):
    torch.manual_seed(0)
    return CausalPixModel(small_run_config, Vocab.default())


@pytest.fixture(scope="module")
def embedder():
    return train_embedder(seed=0, steps=15, batch_size=32, canvas_size=32, pool_size=128)


@pytest.fixture(scope="module")
def candidates(model, tiny_dataset):
    return generate_candidates(model, tiny_dataset[:6], seeds=range(3), num_steps=4)


class TestGenerateCandidates:
    def test_counts_and_shapes(self, candidates, tiny_dataset):
        assert len(candidates) == 6
        assert all(len(c) == 3 for c in candidates)
        assert candidates[0][0].shape == tiny_dataset[0].init.shape
        assert candidates[0][0].dtype == np.uint8

    def test_deterministic(self, model, tiny_dataset, candidates):
        again = generate_candidates(model, tiny_dataset[:6], seeds=range(3), num_steps=4)
        assert all(
            np.array_equal(a, b) for row_a, row_b in zip(candidates, again) for a, b in zip(row_a, row_b)
        )

    def test_exactly_k_per_sample(self, model, tiny_dataset):
        cands = generate_candidates(model, tiny_dataset[:2], seeds=range(9), num_steps=2)
        assert all(len(c) == 9 for c in cands)


class TestScoreCandidates:
    def test_report_fields(self, candidates, tiny_dataset, embedder):
        report = score_candidates(tiny_dataset[:6], candidates, embedder, "m", skip_state_match=True)
        total = report.results["m"][TOTAL]
        for key in ("sim_avg", "sim_best_at_k", "auc_avg", "auc_best_at_k", "fid"):
            assert key in total
        assert total["sim_best_at_k"] >= total["sim_avg"]
        assert -1.0 <= total["sim_avg"] <= 1.0

    def test_category_partition(self, candidates, tiny_dataset, embedder):
        report = score_candidates(tiny_dataset[:6], candidates, embedder, "m", skip_state_match=True)
        cats = [c for c in report.results["m"] if c != TOTAL]
        n = sum(
            sum(1 for s in tiny_dataset[:6] if s.record.category.value == c) for c in cats
        )
        assert n == 6

    def test_perfect_candidates_score_one(self, tiny_dataset, embedder):
        perfect = [[s.answer] * 2 for s in tiny_dataset[:5]]
        report = score_candidates(tiny_dataset[:5], perfect, embedder, "gt")
        total = report.results["gt"][TOTAL]
        assert total["sim_avg"] == pytest.approx(1.0, abs=1e-5)
        assert total["state_match_rate"] == 1.0
        # Candidate features duplicate each reference row, so the means agree
        # exactly but the ddof=1 covariances differ slightly between the two
        # set sizes; FID is therefore small but not zero.
        assert total["fid"] < 0.2

    def test_length_mismatch(self, candidates, tiny_dataset, embedder):
        with pytest.raises(ValueError):
            score_candidates(tiny_dataset[:3], candidates, embedder, "m")


class TestContactSheet:
    def test_layout(self, candidates, tiny_dataset):
        sheet = contact_sheet(tiny_dataset[:6], candidates, pad=2)
        h, w = tiny_dataset[0].init.shape[:2]
        assert sheet.shape == (6 * (h + 2) + 2, (2 + 3) * (w + 2) + 2, 3)
        assert sheet.dtype == np.uint8

    def test_contains_init_image(self, candidates, tiny_dataset):
        sheet = contact_sheet(tiny_dataset[:6], candidates, pad=2)
        h, w = tiny_dataset[0].init.shape[:2]
        assert np.array_equal(sheet[2 : 2 + h, 2 : 2 + w], tiny_dataset[0].init)
