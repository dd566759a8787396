"""Rule table and engine: the annotation oracle of the microworld.

Rules live in a versioned JSON file (``rules.json``).  Each rule names
its sample category, a precondition predicate, a list of state
mutations, and the chain nodes/edges those mutations emit.  Applying a
condition is a pure function from (state, condition) to (state, chain).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Any

from ..chains import CausalChain, ChainEdge, ChainNode, EdgeKind, Visibility
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
)


class RuleError(ValueError):
    pass


class UnknownRule(RuleError):
    pass


class SubjectNotFound(RuleError):
    pass


class PreconditionFailed(RuleError):
    pass


@dataclass(frozen=True, eq=False)
class Rule:
    rule_id: str
    category: Category
    subject: str
    precondition: dict[str, Any]
    effects: tuple[dict[str, Any], ...]
    condition_node: dict[str, Any]
    question_templates: tuple[str, ...]
    reveal_ok: tuple[str, ...]
    sampled: bool = True

    def outcome_words(self) -> set[str]:
        """Words that describe this rule's outcome state (for the
        question-safety check): scenery, emotion, pose and added-kind
        names used by its effects."""
        words: set[str] = set()
        for eff in self.effects:
            op = eff["op"]
            if op == "set_scenery":
                words.add(eff["scenery"])
            if "emotion" in eff:
                words.add(eff["emotion"])
            if "pose" in eff:
                words.add(eff["pose"])
            if op == "add_entity":
                words.add(eff["kind"])
        return words


@dataclass(frozen=True, eq=False)
class RuleTable:
    version: int
    rules: tuple[Rule, ...]

    def __post_init__(self) -> None:
        ids = [r.rule_id for r in self.rules]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate rule ids")

    def get(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise UnknownRule(f"no rule {rule_id!r} in rule table v{self.version}")

    def by_category(self, category: Category, sampled_only: bool = True) -> list[Rule]:
        return [
            r
            for r in self.rules
            if r.category == category and (r.sampled or not sampled_only)
        ]


def _parse_rule(d: dict[str, Any]) -> Rule:
    return Rule(
        rule_id=d["id"],
        category=Category(d["category"]),
        subject=d.get("subject", ""),
        precondition=d.get("precondition", {}),
        effects=tuple(d.get("effects", [])),
        condition_node=d["condition"],
        question_templates=tuple(d["question_templates"]),
        reveal_ok=tuple(d.get("reveal_ok", [])),
        sampled=d.get("sampled", True),
    )


@lru_cache(maxsize=1)
def default_rule_table() -> RuleTable:
    raw = resources.files("causalpix.world").joinpath("rules.json").read_text()
    return load_rule_table_text(raw)


def load_rule_table_text(text: str) -> RuleTable:
    d = json.loads(text)
    return RuleTable(version=d["version"], rules=tuple(_parse_rule(r) for r in d["rules"]))


def check_precondition(rule: Rule, state: SceneState) -> None:
    pre = rule.precondition
    if "scenery_in" in pre and state.scenery.value not in pre["scenery_in"]:
        raise PreconditionFailed(
            f"{rule.rule_id}: scenery {state.scenery.value} not in {pre['scenery_in']}"
        )
    for kind in pre.get("requires", []):
        if state.find(Kind(kind)) is None:
            raise SubjectNotFound(f"{rule.rule_id}: requires {kind}, not in scene")
    for kind in pre.get("forbids", []):
        if state.find(Kind(kind)) is not None:
            raise PreconditionFailed(f"{rule.rule_id}: forbids {kind}, present in scene")
    if pre.get("min_characters"):
        n = sum(1 for e in state.present_entities() if e.kind in CHARACTER_KINDS)
        if n < pre["min_characters"]:
            raise PreconditionFailed(f"{rule.rule_id}: needs {pre['min_characters']} characters")
    if pre.get("subject_above_ground"):
        subj = state.find(Kind(rule.subject))
        if subj is None:
            raise SubjectNotFound(f"{rule.rule_id}: subject {rule.subject} absent")
        if subj.row >= GRID - 1:
            raise PreconditionFailed(f"{rule.rule_id}: subject already at ground row")


def _resolve_targets(target: str, state: SceneState, subject: str) -> list[Kind]:
    if target == "all_characters":
        return [e.kind for e in state.present_entities() if e.kind in CHARACTER_KINDS]
    if target == "other_characters":
        return [
            e.kind
            for e in state.present_entities()
            if e.kind in CHARACTER_KINDS and e.kind.value != subject
        ]
    if target == "subject":
        target = subject
    kind = Kind(target)
    if state.find(kind) is None:
        raise SubjectNotFound(f"target {target} not present in scene")
    return [kind]


def apply_condition(
    state: SceneState, cond: Condition, table: RuleTable | None = None
) -> tuple[SceneState, CausalChain]:
    """Apply a condition to a scene; returns the outcome state and the
    emitted causal chain.  Pure: neither input is mutated."""
    table = table or default_rule_table()
    rule = table.get(cond.rule_id)
    check_precondition(rule, state)

    nodes: list[ChainNode] = []
    edges: list[ChainEdge] = []
    counter = 0

    def new_node(entity: str, variation: str, visibility: str) -> ChainNode:
        nonlocal counter
        node = ChainNode(f"n{counter}", entity, variation, Visibility(visibility))
        counter += 1
        nodes.append(node)
        return node

    root = new_node(
        rule.condition_node["entity"],
        rule.condition_node["variation"],
        rule.condition_node["visibility"],
    )
    effect_nodes: list[ChainNode | None] = []

    def emit_nodes(eff: dict[str, Any], entity_name: str) -> ChainNode | None:
        spec = eff.get("node")
        if spec is None:
            effect_nodes.append(None)
            return None
        parent = eff.get("parent", "root")
        parent_node = root if parent == "root" else effect_nodes[parent]
        if parent_node is None:
            raise RuleError(f"{rule.rule_id}: effect parent {parent} emitted no node")
        kind = EdgeKind(eff.get("edge", "causes"))
        src = parent_node
        via = eff.get("via")
        if via is not None:
            via_node = new_node(
                via["entity"].replace("{target}", entity_name),
                via["variation"],
                via["visibility"],
            )
            edges.append(ChainEdge(src.node_id, via_node.node_id, kind))
            src, kind = via_node, EdgeKind.CAUSES
        node = new_node(
            spec["entity"].replace("{target}", entity_name),
            spec["variation"],
            spec["visibility"],
        )
        edges.append(ChainEdge(src.node_id, node.node_id, kind))
        effect_nodes.append(node)
        return node

    out = state
    for eff in rule.effects:
        op = eff["op"]
        if op == "set_scenery":
            out = replace(
                out,
                scenery=Scenery(eff["scenery"]),
                brightness=float(eff.get("brightness", out.brightness)),
            )
            emit_nodes(eff, "")
        elif op == "set_emotion":
            targets = _resolve_targets(eff["target"], state, cond.subject)
            for kind in targets:
                ent = out.find(kind)
                if ent is None:
                    raise SubjectNotFound(f"target {kind.value} not present")
                out = out.with_entity(replace(ent, emotion=Emotion(eff["emotion"])))
                emit_nodes(eff, kind.value)
        elif op == "set_pose":
            targets = _resolve_targets(eff["target"], state, cond.subject)
            for kind in targets:
                ent = out.find(kind)
                if ent is None:
                    raise SubjectNotFound(f"target {kind.value} not present")
                out = out.with_entity(replace(ent, pose=Pose(eff["pose"])))
                emit_nodes(eff, kind.value)
        elif op == "add_entity":
            kind = Kind(eff["kind"])
            if out.find(kind) is not None:
                raise PreconditionFailed(f"{kind.value} already present")
            cell = cond.parameters.get("cell")
            if cell is None:
                free = out.free_cells()
                if not free:
                    raise PreconditionFailed("no free cell for new entity")
                cell = free[0]
            col, row = int(cell[0]), int(cell[1])
            if (col, row) not in out.free_cells():
                raise PreconditionFailed(f"cell ({col},{row}) occupied")
            out = out.with_entity(
                Entity(
                    kind=kind,
                    col=col,
                    row=row,
                    pose=Pose(eff.get("pose", "idle")),
                    emotion=Emotion(eff.get("emotion", "neutral")),
                )
            )
            emit_nodes(eff, kind.value)
        elif op == "remove_entity":
            kind = Kind(eff["target"])
            ent = out.find(kind)
            if ent is None:
                raise SubjectNotFound(f"target {kind.value} not present")
            # drop the entity entirely so states keep only present
            # entities and render/decode round-trips are exact equality
            out = replace(out, entities=tuple(e for e in out.entities if e.kind != kind))
            emit_nodes(eff, kind.value)
        elif op == "move_to_ground":
            kind = Kind(eff["target"])
            ent = out.find(kind)
            if ent is None:
                raise SubjectNotFound(f"target {kind.value} not present")
            dest = (ent.col, GRID - 1)
            if ent.row != GRID - 1 and dest not in out.free_cells():
                raise PreconditionFailed(f"ground cell {dest} occupied")
            out = out.with_entity(replace(ent, row=GRID - 1))
            emit_nodes(eff, kind.value)
        elif op == "noop":
            effect_nodes.append(None)
        else:
            raise RuleError(f"{rule.rule_id}: unknown effect op {op!r}")

    chain = CausalChain(nodes=tuple(nodes), edges=tuple(edges), root=root.node_id)
    return out, chain


def mutated_fields(init: SceneState, answer: SceneState) -> dict[str, Any]:
    """Fields the rule changed, keyed for state matching.

    Keys: "scenery", "brightness", and per-kind "<kind>.<attr>" for
    attribute changes, "<kind>.present" for additions/removals,
    "<kind>.position" for moves.
    """
    out: dict[str, Any] = {}
    if init.scenery != answer.scenery:
        out["scenery"] = answer.scenery.value
    if init.brightness != answer.brightness:
        out["brightness"] = answer.brightness
    before = {e.kind: e for e in init.entities}
    after = {e.kind: e for e in answer.entities}
    for kind in set(before) | set(after):
        b, a = before.get(kind), after.get(kind)
        b_present = b is not None and b.present
        a_present = a is not None and a.present
        if b_present != a_present:
            out[f"{kind.value}.present"] = a_present
            if a_present:
                out[f"{kind.value}.position"] = (a.col, a.row)
                out[f"{kind.value}.pose"] = a.pose.value
                out[f"{kind.value}.emotion"] = a.emotion.value
            continue
        if not a_present:
            continue
        if (b.col, b.row) != (a.col, a.row):
            out[f"{kind.value}.position"] = (a.col, a.row)
        if b.pose != a.pose:
            out[f"{kind.value}.pose"] = a.pose.value
        if b.emotion != a.emotion:
            out[f"{kind.value}.emotion"] = a.emotion.value
    return out
