import numpy as np
import pytest

from causalpix.evalsuite.metrics import (
    DEFAULT_GRID,
    EmptyGrid,
    InvalidRecord,
    JudgmentRecord,
    SetTooSmall,
    ShapeMismatch,
    auc,
    fid,
    sim_avg,
    sim_best_at_k,
    state_match_rate,
    tally_human,
)
from causalpix.evalsuite.report import TOTAL, EvalReport, MalformedReport, render_report
from oracles import brute_auc, brute_fid, brute_sim_avg, brute_sim_best


class TestSimilarity:
    def test_identical_gives_one(self, rng):
        g = rng.normal(size=(5, 8))
        p = np.repeat(g[:, None], 3, axis=1)
        assert sim_avg(p, g) == pytest.approx(1.0)
        assert sim_best_at_k(p, g) == pytest.approx(1.0)

    def test_hand_case(self):
        g = np.array([[1.0, 0.0]])
        p = np.array([[[1.0, 0.0], [1.0, np.sqrt(3.0)]]])  # cosines 1.0 and 0.5
        assert sim_avg(p, g) == pytest.approx(0.75)
        assert sim_best_at_k(p, g) == pytest.approx(1.0)

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            p = rng.normal(size=(6, 4, 10))
            g = rng.normal(size=(6, 10))
            assert abs(sim_avg(p, g) - brute_sim_avg(p, g)) < 1e-9
            assert abs(sim_best_at_k(p, g) - brute_sim_best(p, g)) < 1e-9

    def test_best_at_one_equals_avg(self, rng):
        p = rng.normal(size=(7, 1, 5))
        g = rng.normal(size=(7, 5))
        assert sim_best_at_k(p, g) == pytest.approx(sim_avg(p, g), abs=1e-12)

    def test_best_geq_avg(self, rng):
        for _ in range(50):
            p = rng.normal(size=(4, 9, 6))
            g = rng.normal(size=(4, 6))
            assert sim_best_at_k(p, g) >= sim_avg(p, g) - 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            sim_avg(np.zeros((2, 3, 4)), np.zeros((3, 4)))


class TestAUC:
    def test_all_ones(self):
        assert auc(np.ones(10)) == pytest.approx(1.0)

    def test_all_half(self):
        assert auc(np.full(10, 0.5)) == pytest.approx(51 / 101)

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            sims = rng.uniform(-1, 1, size=50)
            assert abs(auc(sims) - brute_auc(sims, DEFAULT_GRID)) < 1e-12

    def test_close_to_clamped_mean(self, rng):
        sims = rng.uniform(-1, 1, size=400)
        assert abs(auc(sims) - np.clip(sims, 0, 1).mean()) <= 0.01

    def test_empty_grid(self):
        with pytest.raises(EmptyGrid):
            auc(np.ones(3), np.array([]))

    def test_non_increasing_grid_rejected(self):
        with pytest.raises(ValueError):
            auc(np.ones(3), np.array([0.5, 0.5]))


class TestFID:
    def test_identical_sets_zero(self, rng):
        a = rng.normal(size=(40, 6))
        assert fid(a, a) == pytest.approx(0.0, abs=1e-6)

    def test_symmetric(self, rng):
        a = rng.normal(size=(30, 5))
        b = rng.normal(loc=2.0, size=(30, 5))
        assert fid(a, b) == pytest.approx(fid(b, a), abs=1e-9)

    def test_point_masses(self):
        assert fid(np.zeros((8, 1)), np.ones((8, 1)), eps=1e-12) == pytest.approx(1.0, abs=1e-6)

    def test_matches_brute_force(self, rng):
        for _ in range(10):
            a = rng.normal(size=(25, 4))
            b = rng.normal(loc=0.5, size=(30, 4))
            assert abs(fid(a, b) - brute_fid(a, b)) < 1e-6

    def test_set_too_small(self, rng):
        with pytest.raises(SetTooSmall):
            fid(rng.normal(size=(1, 4)), rng.normal(size=(10, 4)))


class TestStateMatchRate:
    def test_ground_truth_renders_match(self):
        from causalpix.world.dataset import generate_samples
        from causalpix.world.render import render

        rows = generate_samples(10, seed=8, canvas_size=32)
        gen = [render(rec.answer_state) for rec, _, _ in rows]
        rate = state_match_rate(
            gen, [rec.init_state for rec, _, _ in rows], [rec.answer_state for rec, _, _ in rows]
        )
        assert rate == 1.0

    def test_copying_init_fails(self):
        from causalpix.world.dataset import generate_samples
        from causalpix.world.render import render

        rows = generate_samples(10, seed=8, canvas_size=32)
        gen = [render(rec.init_state) for rec, _, _ in rows]
        rate = state_match_rate(
            gen, [rec.init_state for rec, _, _ in rows], [rec.answer_state for rec, _, _ in rows]
        )
        assert rate == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            state_match_rate([np.zeros((32, 32, 3), dtype=np.uint8)], [], [])


class TestJudgments:
    def test_best_must_be_plausible(self):
        with pytest.raises(InvalidRecord):
            JudgmentRecord("r1", "s1", plausible=("m1",), best="m2")

    def test_none_plausible_means_no_best(self):
        rec = JudgmentRecord("r1", "s1", plausible=(), best=None)
        assert rec.best is None

    def test_tally_hand_count(self):
        records = [
            JudgmentRecord("r1", "s1", ("a", "b"), "a"),
            JudgmentRecord("r2", "s1", ("a",), "a"),
            JudgmentRecord("r3", "s1", ("b",), "b"),
            JudgmentRecord("r4", "s1", (), None),
            JudgmentRecord("r5", "s1", ("a", "b"), "b"),
        ]
        out = tally_human(records, ["a", "b"])
        assert out["a"] == {"acc": 3 / 5, "chosen_rate": 2 / 5}
        assert out["b"] == {"acc": 3 / 5, "chosen_rate": 2 / 5}

    def test_chosen_rates_sum_at_most_one(self):
        records = [JudgmentRecord(f"r{i}", "s", ("a", "b"), "a" if i % 2 else None) for i in range(10)]
        out = tally_human(records, ["a", "b"])
        assert out["a"]["chosen_rate"] + out["b"]["chosen_rate"] <= 1.0

    def test_record_roundtrip(self):
        rec = JudgmentRecord("r1", "s1", ("a",), "a")
        assert JudgmentRecord.from_dict(rec.to_dict()) == rec

    def test_empty_records_rejected(self):
        with pytest.raises(InvalidRecord):
            tally_human([], ["a"])


class TestEvalReport:
    def _populated(self):
        rep = EvalReport(meta={"k": 9})
        for m in ("question", "answer", "latent"):
            for cat in [TOTAL] + [c for c, _ in __import__("causalpix.evalsuite.report", fromlist=["COLUMNS"]).COLUMNS[1:]]:
                rep.set_value(m, cat, "sim_avg", 0.5)
                rep.set_value(m, cat, "fid", 3.25)
        return rep

    def test_save_load_roundtrip(self, tmp_path):
        rep = self._populated()
        rep.save(tmp_path / "r.json")
        again = EvalReport.load(tmp_path / "r.json")
        assert again.results == rep.results

    def test_render_has_category_columns(self):
        text = render_report(self._populated())
        for col in ("TT", "SV", "ME", "FE", "EV", "EMV"):
            assert col in text

    def test_render_marks_fid_direction(self):
        text = render_report(self._populated())
        assert "FID ↓" in text
        assert "Sim_Avg ↑" in text

    def test_render_deterministic(self):
        assert render_report(self._populated()) == render_report(self._populated())

    def test_malformed_rejected(self, tmp_path):
        (tmp_path / "bad.json").write_text("{}")
        with pytest.raises(MalformedReport):
            EvalReport.load(tmp_path / "bad.json")
