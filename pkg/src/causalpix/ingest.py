"""Data plumbing: shot segmentation of frame sequences, split
construction, and corpus statistics over dataset manifests."""

from __future__ import annotations

import collections
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from ._core import frame_mean_abs_diff
from .world.dataset import SampleRecord
from .world.questions import words_of
from .world.state import CATEGORY_ORDER

#: Frames are reduced to this side length (grayscale) before differencing.
DIFF_SIDE = 32


class EmptySequence(ValueError):
    pass


class CountMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    start_frame: int
    end_frame: int

    def __post_init__(self) -> None:
        if self.end_frame < self.start_frame:
            raise ValueError("end_frame < start_frame")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class SplitSpec:
    train: int
    val: int
    test: int
    seed: int = 0
    chains_in_train: bool = False

    def __post_init__(self) -> None:
        if min(self.train, self.val, self.test) < 0:
            raise ValueError("split counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.train + self.val + self.test


def _to_gray_small(frame: np.ndarray) -> np.ndarray:
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    if arr.shape != (DIFF_SIDE, DIFF_SIDE):
        img = Image.fromarray(arr.astype(np.float32), mode="F")
        arr = np.asarray(img.resize((DIFF_SIDE, DIFF_SIDE), Image.BILINEAR), dtype=np.float64)
    return arr


def segment_frames(
    frames: Sequence[np.ndarray], pixel_thresh: float, min_len: int = 1
) -> list[Segment]:
    """Cut a frame sequence into segments at hard scene changes.

    A cut is placed wherever the mean absolute difference between
    adjacent frames (on 32x32 grayscale reductions) exceeds
    ``pixel_thresh``.  Segments shorter than ``min_len`` are merged into
    the following segment (a trailing short segment merges backward).
    The returned segments tile [0, len(frames)-1] exactly.
    """
    if len(frames) == 0:
        raise EmptySequence("no frames")
    if pixel_thresh <= 0:
        raise ValueError("pixel_thresh must be positive")
    if min_len < 1:
        raise ValueError("min_len must be >= 1")

    small = np.stack([_to_gray_small(f) for f in frames]).reshape(len(frames), -1)
    diffs = frame_mean_abs_diff(small)
    bounds = [0] + [i + 1 for i in range(len(diffs)) if diffs[i] > pixel_thresh] + [len(frames)]
    segs = [Segment(bounds[i], bounds[i + 1] - 1) for i in range(len(bounds) - 1)]

    i = 0
    while len(segs) > 1 and i < len(segs):
        if segs[i].length >= min_len:
            i += 1
            continue
        if i + 1 < len(segs):
            segs[i : i + 2] = [Segment(segs[i].start_frame, segs[i + 1].end_frame)]
        else:
            segs[i - 1 : i + 1] = [Segment(segs[i - 1].start_frame, segs[i].end_frame)]
            i -= 1
    return segs


def split(
    records: Sequence[SampleRecord], spec: SplitSpec
) -> tuple[list[SampleRecord], list[SampleRecord], list[SampleRecord]]:
    """Seed-deterministic shuffle-then-partition of a manifest.

    With ``chains_in_train`` every chain-annotated sample is assigned to
    the training split before the shuffled fill.
    """
    if spec.total != len(records):
        raise CountMismatch(f"spec sums to {spec.total}, manifest has {len(records)}")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5B117]))
    order = rng.permutation(len(records))

    if spec.chains_in_train:
        chain_idx = [i for i in order if records[i].chain is not None]
        rest = [i for i in order if records[i].chain is None]
        if len(chain_idx) > spec.train:
            raise CountMismatch(
                f"{len(chain_idx)} chain-annotated samples exceed train size {spec.train}"
            )
        ordered = chain_idx + rest
    else:
        ordered = list(order)

    train = [records[i] for i in ordered[: spec.train]]
    val = [records[i] for i in ordered[spec.train : spec.train + spec.val]]
    test = [records[i] for i in ordered[spec.train + spec.val :]]
    return train, val, test


def corpus_stats(records: Sequence[SampleRecord]) -> dict:
    """Question-length, chain-length, and category distributions."""
    qlens = [len([w for w in words_of(r.question) if w not in ("?", ";")]) for r in records]
    chain_lens = [len(r.chain.nodes) for r in records if r.chain is not None]
    cats = collections.Counter(r.category.value for r in records)
    return {
        "n": len(records),
        "n_chain_annotated": len(chain_lens),
        "question_length_mean": float(np.mean(qlens)) if qlens else 0.0,
        "question_length_hist": dict(sorted(collections.Counter(qlens).items())),
        "chain_length_mean": float(np.mean(chain_lens)) if chain_lens else 0.0,
        "chain_length_hist": dict(sorted(collections.Counter(chain_lens).items())),
        "category_counts": {c.value: cats.get(c.value, 0) for c in CATEGORY_ORDER},
    }


def format_stats(stats: dict) -> str:
    lines = [
        f"samples: {stats['n']} ({stats['n_chain_annotated']} chain-annotated)",
        f"mean question length: {stats['question_length_mean']:.1f} words",
        f"mean chain length: {stats['chain_length_mean']:.1f} nodes",
        "category counts:",
    ]
    for cat, count in stats["category_counts"].items():
        lines.append(f"  {cat:20s} {count}")
    lines.append("chain length histogram:")
    for length, count in stats["chain_length_hist"].items():
        lines.append(f"  {length:3d} nodes: {count}")
    return "\n".join(lines)


def load_frames_dir(path: Path) -> list[np.ndarray]:
    """Ordered frame list from a directory of images (sorted by name)."""
    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not files:
        raise EmptySequence(f"no image frames under {path}")
    return [np.asarray(Image.open(p).convert("RGB")) for p in files]
