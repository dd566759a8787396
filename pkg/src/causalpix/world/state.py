"""Symbolic scene state for the sprite microworld.

A scene is a square grid of cells over a flat scenery background.  Each
entity occupies exactly one cell and at most one entity of each kind may
be present, so a kind name is an unambiguous entity reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any


class Scenery(str, Enum):
    DAY = "day"
    NIGHT = "night"
    RAIN = "rain"
    SNOW = "snow"
    CLEAR = "clear"


class Kind(str, Enum):
    CAT = "cat"
    MOUSE = "mouse"
    DOG = "dog"
    BALL = "ball"
    CHEESE = "cheese"
    LAMP = "lamp"
    DOOR = "door"


class Pose(str, Enum):
    IDLE = "idle"
    JUMP = "jump"
    RUN = "run"
    FALL = "fall"


class Emotion(str, Enum):
    NEUTRAL = "neutral"
    HAPPY = "happy"
    SCARED = "scared"
    ANGRY = "angry"
    PAINED = "pained"


#: Kinds that carry pose and emotion; the rest are inert objects.
CHARACTER_KINDS = (Kind.CAT, Kind.MOUSE, Kind.DOG)

#: Brightness is kept on a small discrete ladder so that rendering is
#: exactly invertible from 8-bit pixels.
BRIGHTNESS_LEVELS = (0.25, 0.5, 0.75, 1.0)

GRID = 8  # cells per side


@dataclass(frozen=True)
class Entity:
    kind: Kind
    col: int
    row: int
    pose: Pose = Pose.IDLE
    emotion: Emotion = Emotion.NEUTRAL
    present: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "col": self.col,
            "row": self.row,
            "pose": self.pose.value,
            "emotion": self.emotion.value,
            "present": self.present,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "Entity":
        return Entity(
            kind=Kind(d["kind"]),
            col=int(d["col"]),
            row=int(d["row"]),
            pose=Pose(d["pose"]),
            emotion=Emotion(d["emotion"]),
            present=bool(d["present"]),
        )


@dataclass(frozen=True)
class SceneState:
    scenery: Scenery
    brightness: float
    entities: tuple[Entity, ...]
    canvas_size: int = 64

    def __post_init__(self) -> None:
        if self.brightness not in BRIGHTNESS_LEVELS:
            raise ValueError(f"brightness must be one of {BRIGHTNESS_LEVELS}")
        if self.canvas_size % GRID != 0:
            raise ValueError("canvas_size must be a multiple of the grid size")
        occupied = set()
        kinds = set()
        for e in self.entities:
            if not (0 <= e.col < GRID and 0 <= e.row < GRID):
                raise ValueError(f"entity {e.kind.value} outside canvas bounds")
            if e.present:
                if (e.col, e.row) in occupied:
                    raise ValueError(f"cell ({e.col},{e.row}) holds two entities")
                occupied.add((e.col, e.row))
            if e.kind in kinds:
                raise ValueError(f"duplicate kind {e.kind.value}")
            kinds.add(e.kind)

    @property
    def cell_px(self) -> int:
        return self.canvas_size // GRID

    def present_entities(self) -> tuple[Entity, ...]:
        return tuple(e for e in self.entities if e.present)

    def find(self, kind: Kind) -> Entity | None:
        for e in self.entities:
            if e.kind == kind and e.present:
                return e
        return None

    def with_entity(self, entity: Entity) -> "SceneState":
        """Replace or append the entity of ``entity.kind``."""
        out = [e for e in self.entities if e.kind != entity.kind]
        out.append(entity)
        out.sort(key=lambda e: e.kind.value)
        return replace(self, entities=tuple(out))

    def free_cells(self) -> list[tuple[int, int]]:
        occupied = {(e.col, e.row) for e in self.present_entities()}
        return [
            (c, r) for r in range(GRID) for c in range(GRID) if (c, r) not in occupied
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenery": self.scenery.value,
            "brightness": self.brightness,
            "canvas_size": self.canvas_size,
            "entities": [e.to_dict() for e in self.entities],
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "SceneState":
        return SceneState(
            scenery=Scenery(d["scenery"]),
            brightness=float(d["brightness"]),
            canvas_size=int(d["canvas_size"]),
            entities=tuple(Entity.from_dict(e) for e in d["entities"]),
        )


@dataclass(frozen=True)
class Condition:
    """The minor premise: a rule instance applied to a scene."""

    rule_id: str
    subject: str  # entity kind name, or "" for scenery rules
    parameters: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "subject": self.subject,
            "parameters": dict(self.parameters),
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "Condition":
        return Condition(
            rule_id=d["rule_id"],
            subject=d.get("subject", ""),
            parameters=dict(d.get("parameters", {})),
        )


class Category(str, Enum):
    SCENERY_VARIATION = "scenery_variation"
    MORE_ENTITIES = "more_entities"
    FEWER_ENTITIES = "fewer_entities"
    ENTITIES_VARIATION = "entities_variation"
    EMOTION_VARIATION = "emotion_variation"


#: Column order used in reports (total first, then the five categories).
CATEGORY_ORDER = (
    Category.SCENERY_VARIATION,
    Category.MORE_ENTITIES,
    Category.FEWER_ENTITIES,
    Category.ENTITIES_VARIATION,
    Category.EMOTION_VARIATION,
)
