import numpy as np
import pytest

from causalpix.world.dataset import (
    DEFAULT_CATEGORY_MIX,
    SampleRecord,
    generate_samples,
    make_dataset,
    read_manifest,
)
from causalpix.world.questions import phrase_question, question_is_safe, vocabulary, words_of
from causalpix.world.render import background_color, render, sprite_patch, template_stack
from causalpix.world.rules import (
    PreconditionFailed,
    UnknownRule,
    apply_condition,
    default_rule_table,
    mutated_fields,
)
from causalpix.world.sampler import sample_scene
from causalpix.world.state import (
    BRIGHTNESS_LEVELS,
    CATEGORY_ORDER,
    GRID,
    Category,
    Condition,
    Emotion,
    Entity,
    Kind,
    Pose,
    SceneState,
    Scenery,
)


def _simple_state(**kwargs):
    defaults = dict(
        scenery=Scenery.DAY,
        brightness=1.0,
        entities=(Entity(kind=Kind.CAT, col=2, row=7, pose=Pose.IDLE, emotion=Emotion.NEUTRAL),),
    )
    defaults.update(kwargs)
    return SceneState(**defaults)


class TestSceneState:
    def test_roundtrip_dict(self):
        s = _simple_state()
        assert SceneState.from_dict(s.to_dict()) == s

    def test_rejects_out_of_grid(self):
        with pytest.raises(ValueError):
            _simple_state(
                entities=(Entity(kind=Kind.CAT, col=GRID, row=0, pose=Pose.IDLE, emotion=Emotion.NEUTRAL),)
            )

    def test_rejects_duplicate_kind(self):
        e1 = Entity(kind=Kind.CAT, col=0, row=0, pose=Pose.IDLE, emotion=Emotion.NEUTRAL)
        e2 = Entity(kind=Kind.CAT, col=1, row=1, pose=Pose.IDLE, emotion=Emotion.NEUTRAL)
        with pytest.raises(ValueError):
            _simple_state(entities=(e1, e2))

    def test_rejects_shared_cell(self):
        e1 = Entity(kind=Kind.CAT, col=3, row=3, pose=Pose.IDLE, emotion=Emotion.NEUTRAL)
        e2 = Entity(kind=Kind.DOG, col=3, row=3, pose=Pose.IDLE, emotion=Emotion.NEUTRAL)
        with pytest.raises(ValueError):
            _simple_state(entities=(e1, e2))

    def test_rejects_off_ladder_brightness(self):
        with pytest.raises(ValueError):
            _simple_state(brightness=0.33)

    def test_free_cells_excludes_occupied(self):
        s = _simple_state()
        assert (2, 7) not in s.free_cells()
        assert len(s.free_cells()) == GRID * GRID - 1


class TestRender:
    def test_shape_and_dtype(self):
        img = render(_simple_state())
        assert img.shape == (64, 64, 3) and img.dtype == np.uint8

    def test_deterministic(self):
        s = _simple_state()
        assert np.array_equal(render(s), render(s))

    def test_canvas_32(self):
        s = _simple_state(canvas_size=32)
        assert render(s).shape == (32, 32, 3)

    def test_backgrounds_distinct(self):
        colors = {tuple(background_color(sc, b)) for sc in Scenery for b in BRIGHTNESS_LEVELS}
        assert len(colors) == len(Scenery) * len(BRIGHTNESS_LEVELS)

    @pytest.mark.parametrize("cell_px", [4, 8])
    def test_sprites_pairwise_distinct(self, cell_px):
        rgb, opaque = template_stack(cell_px)
        flat = np.concatenate([rgb.reshape(len(rgb), -1), opaque.reshape(len(rgb), -1)], axis=1)
        assert len(np.unique(flat, axis=0)) == len(rgb)

    def test_sprite_patch_cached_identity(self):
        a = sprite_patch(Kind.CAT, Pose.JUMP, Emotion.HAPPY, 8)
        b = sprite_patch(Kind.CAT, Pose.JUMP, Emotion.HAPPY, 8)
        assert a is b


class TestRules:
    def test_unknown_rule(self):
        with pytest.raises(UnknownRule):
            default_rule_table().get("no_such_rule")

    def test_apply_is_pure(self):
        state, cond = sample_scene(0, Category.EMOTION_VARIATION)
        before = state.to_dict()
        apply_condition(state, cond)
        assert state.to_dict() == before

    def test_apply_deterministic(self):
        state, cond = sample_scene(1, Category.MORE_ENTITIES)
        a1, c1 = apply_condition(state, cond)
        a2, c2 = apply_condition(state, cond)
        assert a1 == a2 and c1.to_dict() == c2.to_dict()

    def test_every_sampled_rule_reachable(self):
        table = default_rule_table()
        seen = set()
        for seed in range(400):
            for cat in CATEGORY_ORDER:
                _, cond = sample_scene(seed, cat)
                seen.add(cond.rule_id)
        sampled = {r.rule_id for r in table.rules if r.sampled}
        assert sampled <= seen

    def test_mutated_fields_nonempty_for_sampled(self):
        for seed in range(20):
            for cat in CATEGORY_ORDER:
                state, cond = sample_scene(seed, cat)
                answer, _ = apply_condition(state, cond)
                assert mutated_fields(state, answer), cond.rule_id

    def test_identity_rule_mutates_nothing(self):
        table = default_rule_table()
        rule = next(r for r in table.rules if not r.sampled)
        state = _simple_state()
        answer, chain = apply_condition(state, Condition(rule.rule_id, rule.subject, {}))
        assert mutated_fields(state, answer) == {}
        assert len(chain.nodes) >= 1


class TestQuestions:
    def test_vocabulary_closed(self):
        vocab = set(vocabulary())
        for seed in range(100):
            for cat in CATEGORY_ORDER:
                _, cond = sample_scene(seed, cat)
                q = phrase_question(cond, cat)
                assert set(words_of(q)) <= vocab

    def test_questions_do_not_leak_outcomes(self):
        table = default_rule_table()
        for rule in table.rules:
            for template_id in range(len(rule.question_templates)):
                cond = Condition(rule.rule_id, rule.subject, {"template": template_id})
                q = phrase_question(cond, rule.category, table)
                assert question_is_safe(rule, q), (rule.rule_id, q)

    def test_mean_question_length_near_target(self):
        lengths = []
        for seed in range(150):
            for cat in CATEGORY_ORDER:
                _, cond = sample_scene(seed, cat)
                q = phrase_question(cond, cat)
                lengths.append(len([w for w in words_of(q) if w not in ("?", ";")]))
        mean = float(np.mean(lengths))
        assert 14.0 <= mean <= 22.0


class TestDataset:
    def test_category_faithful(self):
        rows = generate_samples(60, seed=3, canvas_size=32)
        for rec, _, _ in rows:
            table = default_rule_table()
            assert table.get(rec.condition.rule_id).category == rec.category

    def test_answer_state_matches_oracle(self):
        for rec, _, _ in generate_samples(40, seed=4, canvas_size=32):
            answer, _ = apply_condition(rec.init_state, rec.condition)
            assert answer == rec.answer_state

    def test_images_match_states(self):
        for rec, init_img, answer_img in generate_samples(10, seed=5, canvas_size=32):
            assert np.array_equal(init_img, render(rec.init_state))
            assert np.array_equal(answer_img, render(rec.answer_state))

    def test_chain_fraction_exact(self):
        rows = generate_samples(100, seed=6, chain_fraction=0.3, canvas_size=32)
        assert sum(1 for r, _, _ in rows if r.chain is not None) == 30

    def test_record_roundtrip(self):
        rec = generate_samples(1, seed=7, canvas_size=32)[0][0]
        assert SampleRecord.from_dict(rec.to_dict()).to_dict() == rec.to_dict()

    def test_make_dataset_deterministic(self, tmp_path):
        import hashlib

        def tree_hash(root):
            h = hashlib.sha256()
            for p in sorted(root.rglob("*")):
                if p.is_file():
                    h.update(p.relative_to(root).as_posix().encode())
                    h.update(p.read_bytes())
            return h.hexdigest()

        make_dataset(tmp_path / "a", 12, seed=9, canvas_size=32)
        make_dataset(tmp_path / "b", 12, seed=9, canvas_size=32)
        assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")

    def test_manifest_roundtrip(self, tmp_path):
        manifest = make_dataset(tmp_path, 8, seed=2, canvas_size=32)
        records = read_manifest(manifest)
        assert len(records) == 8
        assert all(isinstance(r, SampleRecord) for r in records)

    def test_default_mix_sums_to_one(self):
        assert abs(sum(DEFAULT_CATEGORY_MIX) - 1.0) < 1e-12
