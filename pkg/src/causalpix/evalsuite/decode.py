"""Scene decoding: nearest-sprite template matching per grid cell.

The decoder inverts ``render`` exactly on clean renders and returns the
best-matching state (with per-cell confidence) on arbitrary images, so
it can grade generated samples against the rule-engine oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._core import cell_match_ssd
from ..world.render import background_color, template_index, template_stack
from ..world.state import (
    BRIGHTNESS_LEVELS,
    GRID,
    Entity,
    SceneState,
    Scenery,
)

_comp_cache: dict[tuple[bytes, int], np.ndarray] = {}


def _background_candidates() -> list[tuple[Scenery, float, np.ndarray]]:
    return [
        (s, b, background_color(s, b).astype(np.float64))
        for s in Scenery
        for b in BRIGHTNESS_LEVELS
    ]


def _composited_templates(bg: np.ndarray, cell_px: int) -> np.ndarray:
    """(T+1, D) stack: row 0 is the empty cell, then every sprite."""
    key = (bg.astype(np.uint8).tobytes(), cell_px)
    cached = _comp_cache.get(key)
    if cached is not None:
        return cached
    rgb, opaque = template_stack(cell_px)
    comps = np.where(opaque[..., None], rgb, bg.astype(np.uint8))
    empty = np.broadcast_to(bg.astype(np.uint8), (1, cell_px, cell_px, 3))
    stack = np.concatenate([empty, comps]).reshape(len(comps) + 1, -1).astype(np.float64)
    _comp_cache[key] = stack
    return stack


@dataclass(frozen=True)
class DecodeResult:
    state: SceneState
    cell_confidence: np.ndarray  # (GRID, GRID) in (0, 1]
    mean_confidence: float


def decode_state_full(image: np.ndarray) -> DecodeResult:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected square (H, H, 3) image, got {img.shape}")
    size = img.shape[0]
    if size % GRID != 0:
        raise ValueError("image side must be a multiple of the grid size")
    cell = size // GRID
    imgf = img.astype(np.float64)

    med = np.median(imgf.reshape(-1, 3), axis=0)
    scenery, brightness, bg = min(
        _background_candidates(), key=lambda c: float(((med - c[2]) ** 2).sum())
    )

    cells = (
        imgf.reshape(GRID, cell, GRID, cell, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(GRID * GRID, -1)
    )
    comps = _composited_templates(bg, cell)
    ssd = cell_match_ssd(cells, comps)
    best = ssd.argmin(axis=1)
    best_ssd = ssd[np.arange(len(best)), best]
    dim = cells.shape[1]
    confidence = (1.0 / (1.0 + best_ssd / dim)).reshape(GRID, GRID)

    idx = template_index(cell)
    chosen: dict = {}
    for flat, t in enumerate(best):
        if t == 0:
            continue
        kind, pose, emotion = idx[t - 1]
        row, col = divmod(flat, GRID)
        # row-major reshape above: flat = row * GRID + col
        score = best_ssd[flat]
        if kind not in chosen or score < chosen[kind][0]:
            chosen[kind] = (score, Entity(kind=kind, col=col, row=row, pose=pose, emotion=emotion))
    entities = tuple(sorted((e for _, e in chosen.values()), key=lambda e: e.kind.value))
    state = SceneState(
        scenery=scenery, brightness=brightness, entities=entities, canvas_size=size
    )
    return DecodeResult(
        state=state,
        cell_confidence=confidence,
        mean_confidence=float(confidence.mean()),
    )


def decode_state(image: np.ndarray) -> SceneState:
    """Best-matching SceneState for an image; exact inverse of render on
    clean renders (up to absent-entity bookkeeping)."""
    return decode_state_full(image).state
