"""Deterministic sprite rendering of scene states.

Every state renders to exactly one RGB byte array: a flat scenery
background (base colour scaled by the brightness level) with one flat
colour sprite per present entity.  Sprite pixels are not scaled by
brightness, so entities stay recognisable in dark scenes.  Character
sprites carry a small face patch whose colour encodes the emotion.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .state import (
    CHARACTER_KINDS,
    GRID,
    Emotion,
    Kind,
    Pose,
    SceneState,
    Scenery,
)

#: RGB base colour of each scenery at brightness 1.0.
SCENERY_COLORS: dict[Scenery, tuple[int, int, int]] = {
    Scenery.DAY: (135, 206, 235),
    Scenery.NIGHT: (40, 40, 120),
    Scenery.RAIN: (110, 120, 130),
    Scenery.SNOW: (225, 228, 240),
    Scenery.CLEAR: (150, 215, 150),
}

SPRITE_COLORS: dict[Kind, tuple[int, int, int]] = {
    Kind.CAT: (150, 150, 160),
    Kind.MOUSE: (170, 120, 80),
    Kind.DOG: (110, 70, 40),
    Kind.BALL: (220, 60, 50),
    Kind.CHEESE: (240, 200, 60),
    Kind.LAMP: (250, 180, 90),
    Kind.DOOR: (90, 55, 30),
}

EMOTION_COLORS: dict[Emotion, tuple[int, int, int]] = {
    Emotion.NEUTRAL: (30, 30, 30),
    Emotion.HAPPY: (255, 240, 0),
    Emotion.SCARED: (255, 255, 255),
    Emotion.ANGRY: (255, 0, 0),
    Emotion.PAINED: (255, 0, 255),
}

# 8x8 silhouettes; deliberately asymmetric so pose flips stay distinct.
_MASKS = {
    Kind.CAT: [
        ".#......",
        ".##..#..",
        ".######.",
        ".######.",
        "..####..",
        "..####..",
        "..#..#..",
        "..##.#..",
    ],
    Kind.MOUSE: [
        "........",
        ".#......",
        ".#...#..",
        "..####..",
        "..####..",
        "..###...",
        "...##...",
        "..#..#..",
    ],
    Kind.DOG: [
        "##......",
        "######..",
        "########",
        ".######.",
        ".######.",
        "..####..",
        "..#..#..",
        ".##..#..",
    ],
    Kind.BALL: [
        "........",
        "..####..",
        ".######.",
        ".######.",
        ".######.",
        ".#####..",
        "..####..",
        "........",
    ],
    Kind.CHEESE: [
        "........",
        "........",
        "#.......",
        "##......",
        "####....",
        "######..",
        "########",
        "########",
    ],
    Kind.LAMP: [
        "...##...",
        "..####..",
        ".######.",
        "...##...",
        "...##...",
        "...##...",
        "..####..",
        "..###...",
    ],
    Kind.DOOR: [
        ".######.",
        ".######.",
        ".#.##.#.",
        ".#.##.#.",
        ".#.##.#.",
        ".##..##.",
        ".######.",
        ".######.",
    ],
}

# Face patch location (rows, cols) within the 8x8 sprite cell.
_FACE_ROWS = slice(3, 5)
_FACE_COLS = slice(3, 5)


def _base_mask(kind: Kind) -> np.ndarray:
    rows = _MASKS[kind]
    return np.array([[c == "#" for c in row] for row in rows], dtype=bool)


def _posed_mask(kind: Kind, pose: Pose) -> np.ndarray:
    mask = _base_mask(kind)
    if pose == Pose.IDLE:
        return mask
    if pose == Pose.JUMP:
        return np.roll(mask, -1, axis=0)
    if pose == Pose.RUN:
        return mask[:, ::-1]
    if pose == Pose.FALL:
        return mask[::-1, :]
    raise ValueError(f"unknown pose {pose}")


@lru_cache(maxsize=None)
def sprite_patch(
    kind: Kind, pose: Pose, emotion: Emotion, cell_px: int
) -> tuple[np.ndarray, np.ndarray]:
    """Return (rgb, opacity mask) of a sprite at ``cell_px`` resolution.

    cell_px must be 8 or 4; the 4px variant subsamples the 8px art.
    """
    if cell_px not in (4, 8):
        raise ValueError("cell_px must be 4 or 8")
    mask = _posed_mask(kind, pose)
    rgb = np.zeros((8, 8, 3), dtype=np.uint8)
    rgb[mask] = SPRITE_COLORS[kind]
    if kind in CHARACTER_KINDS:
        rgb[_FACE_ROWS, _FACE_COLS] = EMOTION_COLORS[emotion]
        opaque = mask.copy()
        opaque[_FACE_ROWS, _FACE_COLS] = True
    else:
        opaque = mask
    if cell_px == 4:
        rgb = rgb[::2, ::2]
        opaque = opaque[::2, ::2]
    rgb = rgb.copy()
    rgb.setflags(write=False)
    opaque = opaque.copy()
    opaque.setflags(write=False)
    return rgb, opaque


def background_color(scenery: Scenery, brightness: float) -> np.ndarray:
    base = np.array(SCENERY_COLORS[scenery], dtype=np.float64)
    return np.round(base * brightness).astype(np.uint8)


def render(state: SceneState) -> np.ndarray:
    """Render a scene to an (H, W, 3) uint8 array; pure and deterministic."""
    size = state.canvas_size
    cell = state.cell_px
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:] = background_color(state.scenery, state.brightness)
    for e in state.present_entities():
        rgb, opaque = sprite_patch(e.kind, e.pose, e.emotion, cell)
        y, x = e.row * cell, e.col * cell
        patch = img[y : y + cell, x : x + cell]
        patch[opaque] = rgb[opaque]
    return img


def template_index(cell_px: int) -> list[tuple[Kind, Pose, Emotion]]:
    """Canonical ordering of all renderable sprite variants."""
    out: list[tuple[Kind, Pose, Emotion]] = []
    for kind in Kind:
        if kind in CHARACTER_KINDS:
            for pose in Pose:
                for emotion in Emotion:
                    out.append((kind, pose, emotion))
        else:
            out.append((kind, Pose.IDLE, Emotion.NEUTRAL))
    return out


@lru_cache(maxsize=None)
def template_stack(cell_px: int) -> tuple[np.ndarray, np.ndarray]:
    """All sprite variants as arrays: rgb (T, c, c, 3) and opacity (T, c, c)."""
    idx = template_index(cell_px)
    rgb = np.stack([sprite_patch(k, p, e, cell_px)[0] for k, p, e in idx])
    opaque = np.stack([sprite_patch(k, p, e, cell_px)[1] for k, p, e in idx])
    rgb.setflags(write=False)
    opaque.setflags(write=False)
    return rgb, opaque
