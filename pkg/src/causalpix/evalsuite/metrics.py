"""Similarity, threshold-accuracy, distribution, and judgment metrics.

All embedding-based metrics operate on the frozen evaluator embedder's
vectors; cosine similarities keep their sign, but the threshold-accuracy
curve clamps negatives to zero because its thresholds live in [0, 1].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ..world.rules import mutated_fields
from ..world.state import SceneState
from .decode import decode_state

#: Default threshold grid: 101 evenly spaced points in [0, 1] inclusive.
DEFAULT_GRID = np.linspace(0.0, 1.0, 101)

DEFAULT_K = 9


class ShapeMismatch(ValueError):
    pass


class EmptyGrid(ValueError):
    pass


class SetTooSmall(ValueError):
    pass


class InvalidRecord(ValueError):
    pass


def _cosine_matrix(preds: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """Per-sample cosines: preds (N, K, D), gts (N, D) -> (N, K)."""
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.ndim != 3 or gts.ndim != 2 or preds.shape[0] != gts.shape[0] or preds.shape[2] != gts.shape[1]:
        raise ShapeMismatch(f"preds {preds.shape} vs gts {gts.shape}")
    pn = preds / np.linalg.norm(preds, axis=2, keepdims=True)
    gn = gts / np.linalg.norm(gts, axis=1, keepdims=True)
    return np.einsum("nkd,nd->nk", pn, gn)


def sim_avg(preds: np.ndarray, gts: np.ndarray) -> float:
    """Mean cosine similarity over all (sample, seed) pairs."""
    return float(_cosine_matrix(preds, gts).mean())


def sim_best_at_k(preds: np.ndarray, gts: np.ndarray) -> float:
    """Mean over samples of the best cosine across seeds."""
    return float(_cosine_matrix(preds, gts).max(axis=1).mean())


def auc(similarities: np.ndarray, grid: np.ndarray = DEFAULT_GRID) -> float:
    """Area under the accuracy-versus-threshold curve.

    acc(t) is the fraction of samples with (negative-clamped) similarity
    >= t; the area is the mean of acc over the grid points.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise EmptyGrid("empty threshold grid")
    if np.any(np.diff(grid) <= 0) or grid.min() < 0 or grid.max() > 1:
        raise ValueError("grid must be strictly increasing within [0, 1]")
    sims = np.clip(np.asarray(similarities, dtype=np.float64), 0.0, None)
    acc = (sims[None, :] >= grid[:, None]).mean(axis=1)
    return float(acc.mean())


def fid(set_a: np.ndarray, set_b: np.ndarray, eps: float = 1e-6) -> float:
    """Fréchet distance between Gaussian fits of two embedding sets."""
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"sets {a.shape} vs {b.shape}")
    if min(len(a), len(b)) < 2:
        raise SetTooSmall("need at least 2 vectors per set")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False) + eps * np.eye(a.shape[1])
    cov_b = np.cov(b, rowvar=False) + eps * np.eye(b.shape[1])
    covmean = linalg.sqrtm(cov_a @ cov_b)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    value = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a + cov_b - 2.0 * covmean))
    if value < 0:
        if value < -1e-8:
            warnings.warn(f"fid matrix square root went negative ({value}); clamping to 0")
        value = 0.0
    return value


def state_match_rate(
    generated_images: list[np.ndarray],
    init_states: list[SceneState],
    answer_states: list[SceneState],
) -> float:
    """Fraction of generations whose decoded state realizes every field
    the rule mutated (fields the rule left alone are ignored)."""
    if not (len(generated_images) == len(init_states) == len(answer_states)):
        raise ShapeMismatch("generated/init/answer lengths differ")
    hits = 0
    for img, init, answer in zip(generated_images, init_states, answer_states):
        decoded = decode_state(np.asarray(img))
        expected = mutated_fields(init, answer)
        got = mutated_fields(init, decoded)
        if all(got.get(k) == v for k, v in expected.items()):
            hits += 1
    return hits / len(generated_images) if generated_images else 0.0


@dataclass(frozen=True)
class JudgmentRecord:
    """One rater's verdict on one sample across all compared methods."""

    rater_id: str
    sample_id: str
    plausible: tuple[str, ...]  # method ids flagged semantically plausible
    best: str | None = None  # method picked best, or None

    def __post_init__(self) -> None:
        if self.best is not None and self.best not in self.plausible:
            raise InvalidRecord(
                f"rater {self.rater_id} sample {self.sample_id}: "
                f"best pick {self.best!r} not among plausible methods"
            )

    def to_dict(self) -> dict:
        return {
            "rater_id": self.rater_id,
            "sample_id": self.sample_id,
            "plausible": list(self.plausible),
            "best": self.best,
        }

    @staticmethod
    def from_dict(d: dict) -> "JudgmentRecord":
        return JudgmentRecord(
            rater_id=d["rater_id"],
            sample_id=d["sample_id"],
            plausible=tuple(d["plausible"]),
            best=d.get("best"),
        )


def tally_human(records: list[JudgmentRecord], methods: list[str]) -> dict[str, dict[str, float]]:
    """Per-method Acc (plausible-flag rate) and ChosenRate (best-pick
    rate) over all (rater, sample) pairs."""
    if not records:
        raise InvalidRecord("no judgment records")
    n = len(records)
    out = {}
    for m in methods:
        acc = sum(1 for r in records if m in r.plausible) / n
        chosen = sum(1 for r in records if r.best == m) / n
        out[m] = {"acc": acc, "chosen_rate": chosen}
    return out
