"""Seeded generation of (scene, condition) pairs per sample category."""

from __future__ import annotations

import numpy as np

from .rules import (
    PreconditionFailed,
    Rule,
    RuleTable,
    apply_condition,
    check_precondition,
    default_rule_table,
    mutated_fields,
)
from .state import (
    CHARACTER_KINDS,
    GRID,
    Category,
    Condition,
    Emotion,
    Entity,
    Kind,
    Pose,
    SceneState,
    Scenery,
    BRIGHTNESS_LEVELS,
)

_MAX_ATTEMPTS = 200


def _random_scene(rng: np.random.Generator, rule: Rule, canvas_size: int) -> SceneState:
    pre = rule.precondition
    sceneries = pre.get("scenery_in") or [s.value for s in Scenery]
    scenery = Scenery(sceneries[rng.integers(len(sceneries))])
    brightness = BRIGHTNESS_LEVELS[rng.integers(len(BRIGHTNESS_LEVELS))]

    kinds = {k for k in Kind if rng.random() < 0.4}
    kinds |= {Kind(k) for k in pre.get("requires", [])}
    kinds -= {Kind(k) for k in pre.get("forbids", [])}
    if pre.get("min_characters"):
        chars = [k for k in kinds if k in CHARACTER_KINDS]
        while len(chars) < pre["min_characters"]:
            pick = CHARACTER_KINDS[rng.integers(len(CHARACTER_KINDS))]
            if pick in {Kind(k) for k in pre.get("forbids", [])}:
                continue
            if pick not in kinds:
                kinds.add(pick)
                chars.append(pick)

    order = sorted(kinds, key=lambda k: k.value)
    cells = [(c, r) for r in range(GRID) for c in range(GRID)]
    picks = rng.choice(len(cells), size=len(order), replace=False)
    entities = []
    for kind, ci in zip(order, picks):
        col, row = cells[int(ci)]
        if kind in CHARACTER_KINDS:
            pose = list(Pose)[rng.integers(len(Pose))]
            emotion = list(Emotion)[rng.integers(len(Emotion))]
        else:
            pose, emotion = Pose.IDLE, Emotion.NEUTRAL
        entities.append(Entity(kind=kind, col=col, row=row, pose=pose, emotion=emotion))

    state = SceneState(
        scenery=scenery,
        brightness=brightness,
        entities=tuple(entities),
        canvas_size=canvas_size,
    )
    if rule.precondition.get("subject_above_ground"):
        subj = state.find(Kind(rule.subject))
        if subj is not None and subj.row >= GRID - 1:
            # lift the subject off the ground row, keeping cells unique
            for row in range(GRID - 1):
                if (subj.col, row) in state.free_cells():
                    from dataclasses import replace

                    state = state.with_entity(replace(subj, row=row))
                    break
    return state


def sample_scene(
    seed: int,
    category: Category,
    table: RuleTable | None = None,
    canvas_size: int = 64,
) -> tuple[SceneState, Condition]:
    """Deterministically draw a scene plus a condition of the requested
    category whose application actually changes the scene."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    table = table or default_rule_table()
    rules = table.by_category(category)
    if not rules:
        raise ValueError(f"no sampled rules for category {category.value}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))

    for _ in range(_MAX_ATTEMPTS):
        rule = rules[int(rng.integers(len(rules)))]
        state = _random_scene(rng, rule, canvas_size)
        params: dict = {"template": int(rng.integers(len(rule.question_templates)))}
        if any(e["op"] == "add_entity" for e in rule.effects):
            free = state.free_cells()
            if not free:
                continue
            col, row = free[int(rng.integers(len(free)))]
            params["cell"] = [col, row]
        cond = Condition(rule_id=rule.rule_id, subject=rule.subject, parameters=params)
        try:
            check_precondition(rule, state)
            answer, _ = apply_condition(state, cond, table)
        except PreconditionFailed:
            continue
        diff = mutated_fields(state, answer)
        if not diff:
            continue  # vacuous draw (e.g. target already in the outcome emotion)
        if rule.category == Category.EMOTION_VARIATION and not any(
            k.endswith(".emotion") for k in diff
        ):
            continue
        return state, cond
    raise RuntimeError(f"could not satisfy {category.value} preconditions (seed {seed})")
