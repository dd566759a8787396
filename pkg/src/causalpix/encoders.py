"""Toy text and image encoders.

The text encoder is a small transformer over the microworld's closed
vocabulary; the image encoder follows the query-token pattern: a fixed
set of learned queries cross-attends to convolutional image features,
so its output length is independent of image content and size.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .world.questions import vocabulary, words_of


class OutOfVocabulary(ValueError):
    pass


class SequenceTooLong(ValueError):
    pass


class BadImageShape(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


PAD, BOS, EOS = 0, 1, 2
_SPECIALS = ("<pad>", "<bos>", "<eos>")


class Vocab:
    """Closed token <-> id table; ids 0..2 are pad/bos/eos."""

    def __init__(self, words: Sequence[str]):
        self.words = tuple(_SPECIALS) + tuple(words)
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")

    def __len__(self) -> int:
        return len(self.words)

    @staticmethod
    def default() -> "Vocab":
        return Vocab(vocabulary())

    @staticmethod
    def load(path: Path) -> "Vocab":
        words = [w for w in Path(path).read_text().splitlines() if w]
        return Vocab(words)

    def save(self, path: Path) -> None:
        Path(path).write_text("\n".join(self.words[len(_SPECIALS) :]) + "\n")

    def tokenize(self, text: str) -> list[int]:
        words = words_of(text)
        if not words:
            raise OutOfVocabulary("empty input")
        try:
            return [self.index[w] for w in words]
        except KeyError as exc:
            raise OutOfVocabulary(f"unknown word {exc.args[0]!r}") from exc

    def detokenize(self, ids: Sequence[int]) -> str:
        words = [self.words[i] for i in ids if i not in (PAD, BOS, EOS)]
        return " ".join(words)


def pad_batch(seqs: Sequence[Sequence[int]], device=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad id sequences; returns (ids (B, L), padding mask (B, L) with
    True at padded positions)."""
    max_len = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), max_len), PAD, dtype=torch.long, device=device)
    mask = torch.ones((len(seqs), max_len), dtype=torch.bool, device=device)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = torch.as_tensor(s, dtype=torch.long)
        mask[i, : len(s)] = False
    return ids, mask


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 128
    layers: int = 2
    heads: int = 4
    num_queries: int = 8
    max_len: int = 64
    image_channels: int = 3


class TextEncoder(nn.Module):
    def __init__(self, vocab_size: int, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.token_emb = nn.Embedding(vocab_size, cfg.dim, padding_idx=PAD)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.dim)
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.dim,
            nhead=cfg.heads,
            dim_feedforward=2 * cfg.dim,
            dropout=0.0,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.layers)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        if ids.dim() != 2:
            raise ValueError("ids must be (B, L)")
        if ids.shape[1] > self.cfg.max_len:
            raise SequenceTooLong(f"{ids.shape[1]} tokens > max_len {self.cfg.max_len}")
        pos = torch.arange(ids.shape[1], device=ids.device)
        h = self.token_emb(ids) + self.pos_emb(pos)[None]
        return self.encoder(h, src_key_padding_mask=pad_mask)


class QueryImageEncoder(nn.Module):
    """Fixed-length query tokens cross-attending to conv image features."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.dim
        self.trunk = nn.Sequential(
            nn.Conv2d(cfg.image_channels, 32, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(64, d, 3, stride=2, padding=1),
        )
        self.queries = nn.Parameter(torch.randn(cfg.num_queries, d) * 0.02)
        self.attn = nn.MultiheadAttention(d, cfg.heads, batch_first=True)
        self.norm = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, 2 * d), nn.SiLU(), nn.Linear(2 * d, d))

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() != 4 or image.shape[1] != self.cfg.image_channels:
            raise BadImageShape(f"expected (B, {self.cfg.image_channels}, H, W), got {tuple(image.shape)}")
        if image.shape[2] < 8 or image.shape[3] < 8:
            raise BadImageShape("image too small for the conv trunk")
        feats = self.trunk(image)  # (B, d, h, w)
        tokens = feats.flatten(2).transpose(1, 2)  # (B, hw, d)
        q = self.queries[None].expand(image.shape[0], -1, -1)
        out, _ = self.attn(q, tokens, tokens, need_weights=False)
        out = self.norm(q + out)
        return out + self.ffn(out)


def fuse(image_feats: torch.Tensor, text_feats: torch.Tensor) -> torch.Tensor:
    """Concatenate feature sequences: image queries first, then text."""
    if image_feats.shape[-1] != text_feats.shape[-1]:
        raise DimensionMismatch(
            f"feature dims differ: {image_feats.shape[-1]} vs {text_feats.shape[-1]}"
        )
    return torch.cat([image_feats, text_feats], dim=-2)


def image_to_tensor(img) -> torch.Tensor:
    """uint8 (H, W, 3) image -> float tensor (3, H, W) in [-1, 1]."""
    t = torch.as_tensor(img.copy() if hasattr(img, "copy") else img)
    return t.permute(2, 0, 1).float() / 127.5 - 1.0


def tensor_to_image(t: torch.Tensor):
    """float tensor (3, H, W) in [-1, 1] -> uint8 (H, W, 3)."""
    import numpy as np

    arr = ((t.clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    return np.asarray(arr.permute(1, 2, 0).cpu())
