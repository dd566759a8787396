"""Frozen evaluation embedder.

A small convolutional network trained on attribute classification of
randomly rendered scenes (scenery, brightness, which kinds are present,
and each character's emotion).  Its 512-dim penultimate features are
the representation used by all similarity and distribution metrics, so
metric numbers are only comparable across runs that share an embedder
checkpoint.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..encoders import image_to_tensor
from ..world.render import render
from ..world.state import (
    BRIGHTNESS_LEVELS,
    CHARACTER_KINDS,
    GRID,
    Emotion,
    Entity,
    Kind,
    Pose,
    SceneState,
    Scenery,
)

EMBED_DIM = 512

_SCENERIES = list(Scenery)
_KINDS = list(Kind)
_EMOTIONS = list(Emotion)


class EmbedderMissing(FileNotFoundError):
    pass


class Embedder(nn.Module):
    """Conv trunk -> 512-dim features -> attribute heads.

    ``features`` (pre-normalization) feed distribution metrics;
    ``embed`` returns the unit-normalized version for cosine similarity.
    """

    def __init__(self):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Conv2d(3, 32, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(64, 128, 3, stride=2, padding=1),
            nn.SiLU(),
            # stride 1: faces are ~2 px, a third downsample would erase them
            nn.Conv2d(128, 256, 3, stride=1, padding=1),
            nn.SiLU(),
            # max pooling: sprites cover single feature cells, so
            # averaging would wash their activations out
            nn.AdaptiveMaxPool2d(4),
        )
        self.fc = nn.Linear(256 * 16, EMBED_DIM)
        self.head_scenery = nn.Linear(EMBED_DIM, len(_SCENERIES))
        self.head_brightness = nn.Linear(EMBED_DIM, len(BRIGHTNESS_LEVELS))
        self.head_presence = nn.Linear(EMBED_DIM, len(_KINDS))
        # one emotion head per character kind; class 0 = character absent
        self.head_emotions = nn.ModuleList(
            nn.Linear(EMBED_DIM, 1 + len(_EMOTIONS)) for _ in CHARACTER_KINDS
        )

    def features(self, images: torch.Tensor) -> torch.Tensor:
        return self.fc(self.trunk(images).flatten(1))

    def embed(self, images: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.features(images), dim=-1)

    def head_logits(self, feats: torch.Tensor) -> dict[str, torch.Tensor]:
        out = {
            "scenery": self.head_scenery(feats),
            "brightness": self.head_brightness(feats),
            "presence": self.head_presence(feats),
        }
        for kind, head in zip(CHARACTER_KINDS, self.head_emotions):
            out[f"emotion_{kind.value}"] = head(feats)
        return out


def random_state(rng: np.random.Generator, canvas_size: int = 64) -> SceneState:
    """Random valid scene (independent of the rule engine).

    Characters appear with higher probability than inert objects so the
    pose/emotion heads see enough positive examples.
    """
    scenery = _SCENERIES[int(rng.integers(len(_SCENERIES)))]
    brightness = BRIGHTNESS_LEVELS[int(rng.integers(len(BRIGHTNESS_LEVELS)))]
    kinds = [
        i
        for i, kind in enumerate(_KINDS)
        if rng.random() < (0.6 if kind in CHARACTER_KINDS else 0.25)
    ]
    n = len(kinds)
    cells = rng.choice(GRID * GRID, size=n, replace=False) if n else []
    entities = []
    for k, c in zip(kinds, cells):
        kind = _KINDS[int(k)]
        is_char = kind in CHARACTER_KINDS
        entities.append(
            Entity(
                kind=kind,
                col=int(c) % GRID,
                row=int(c) // GRID,
                pose=list(Pose)[int(rng.integers(len(Pose)))] if is_char else Pose.IDLE,
                emotion=list(Emotion)[int(rng.integers(len(Emotion)))]
                if is_char
                else Emotion.NEUTRAL,
            )
        )
    entities.sort(key=lambda e: e.kind.value)
    return SceneState(
        scenery=scenery, brightness=brightness, entities=tuple(entities), canvas_size=canvas_size
    )


def _labels(state: SceneState) -> dict[str, int]:
    present = {e.kind: e for e in state.present_entities()}
    out = {
        "scenery": _SCENERIES.index(state.scenery),
        "brightness": BRIGHTNESS_LEVELS.index(state.brightness),
    }
    for kind, ent in ((k, present.get(k)) for k in CHARACTER_KINDS):
        out[f"emotion_{kind.value}"] = 0 if ent is None else 1 + _EMOTIONS.index(ent.emotion)
    return out


def _presence_vector(state: SceneState) -> list[float]:
    present = {e.kind for e in state.present_entities()}
    return [1.0 if k in present else 0.0 for k in _KINDS]


def _make_batch(rng: np.random.Generator, n: int, canvas_size: int):
    states = [random_state(rng, canvas_size) for _ in range(n)]
    images = torch.stack([image_to_tensor(render(s)) for s in states])
    labels = {
        key: torch.tensor([_labels(s)[key] for s in states])
        for key in _labels(states[0])
    }
    presence = torch.tensor([_presence_vector(s) for s in states])
    return images, labels, presence


def _classification_loss(logits: dict, labels: dict, presence: torch.Tensor) -> torch.Tensor:
    loss = F.binary_cross_entropy_with_logits(logits["presence"], presence)
    for key, target in labels.items():
        # emotions are the hardest heads (2x2-pixel faces); upweight them
        weight = 2.0 if key.startswith("emotion_") else 1.0
        loss = loss + weight * F.cross_entropy(logits[key], target)
    return loss


def train_embedder(
    seed: int = 0,
    steps: int = 900,
    batch_size: int = 64,
    canvas_size: int = 64,
    lr: float = 1e-3,
    pool_size: int = 4096,
    log=None,
) -> Embedder:
    """Train the embedder on random renders; returns it in eval mode.

    A fixed pool of renders is generated up front and iterated in
    shuffled minibatches, which is far cheaper than rendering per step.
    """
    torch.manual_seed(int(np.random.SeedSequence([seed, 0xE3BED]).generate_state(1)[0]))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE3BED]))
    images, labels, presence = _make_batch(rng, pool_size, canvas_size)
    model = Embedder()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    step = 0
    while step < steps:
        for lo in range(0, pool_size, batch_size):
            idx = torch.as_tensor(rng.choice(pool_size, size=batch_size, replace=False))
            logits = model.head_logits(model.features(images[idx]))
            loss = _classification_loss(
                logits, {k: v[idx] for k, v in labels.items()}, presence[idx]
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            if log is not None and step % 50 == 0:
                log(f"embedder step {step}/{steps} loss {float(loss.detach()):.4f}")
            if step >= steps:
                break
    model.eval()
    return model


@torch.no_grad()
def probe_accuracy(model: Embedder, seed: int = 1, n: int = 512, canvas_size: int = 64) -> dict[str, float]:
    """Held-out attribute accuracy per head (presence thresholded at 0)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xACC]))
    images, labels, presence = _make_batch(rng, n, canvas_size)
    logits = model.head_logits(model.features(images))
    out = {"presence": float(((logits["presence"] > 0) == presence.bool()).float().mean())}
    for key, target in labels.items():
        out[key] = float((logits[key].argmax(1) == target).float().mean())
    return out


def save_embedder(model: Embedder, path: Path) -> None:
    torch.save({"format": "causalpix-embedder-v1", "state_dict": model.state_dict()}, path)


def load_embedder(path: Path) -> Embedder:
    path = Path(path)
    if not path.exists():
        raise EmbedderMissing(f"no embedder checkpoint at {path}")
    blob = torch.load(path, weights_only=True)
    if not isinstance(blob, dict) or blob.get("format") != "causalpix-embedder-v1":
        raise ValueError(f"{path}: not an embedder checkpoint")
    model = Embedder()
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model
