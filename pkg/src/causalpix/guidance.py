"""Trainable guidance mechanisms on top of the encoders: the affine
feature translator into the denoiser's context space, the residual
predictive encoder, the contrastive chain-node loss, and the
chain-text decoder with its teacher-forced loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import torch
from torch import nn
from torch.nn import functional as F

from .encoders import (
    BOS,
    EOS,
    PAD,
    DimensionMismatch,
    EncoderConfig,
    QueryImageEncoder,
    TextEncoder,
    Vocab,
    fuse,
    pad_batch,
)


class Paradigm(str, Enum):
    QUESTION = "question"
    ANSWER = "answer"
    LATENT = "latent"
    LATENT_PLUS = "latent_plus"


class MissingAnswerText(ValueError):
    pass


class EmptyPositives(ValueError):
    pass


class EmptyNegatives(ValueError):
    pass


class NoChainLabel(ValueError):
    pass


@dataclass
class GuidanceContext:
    """Per-sample sequence of context vectors fed to cross-attention."""

    vectors: torch.Tensor  # (L, d_ctx)
    paradigm: Paradigm

    def __post_init__(self) -> None:
        if self.vectors.dim() != 2:
            raise ValueError("context vectors must be (L, d_ctx)")


@dataclass(frozen=True)
class ContrastConfig:
    temperature: float = 0.07
    negatives: int = 15

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.negatives < 1:
            raise ValueError("need at least one negative")


class FeatureTranslator(nn.Module):
    """Single affine map translating encoder features into the
    denoiser's guidance space, shared across sequence positions."""

    def __init__(self, dim_in: int, dim_ctx: int):
        super().__init__()
        self.proj = nn.Linear(dim_in, dim_ctx)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        if feats.shape[-1] != self.proj.in_features:
            raise DimensionMismatch(
                f"expected dim {self.proj.in_features}, got {feats.shape[-1]}"
            )
        return self.proj(feats)


class PredictiveEncoder(nn.Module):
    """Residual MLP turning encoded premises into predicted-outcome
    features; exactly the identity at zero initialization."""

    def __init__(self, dim: int, hidden_mult: int = 2):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden_mult * dim),
            nn.SiLU(),
            nn.Linear(hidden_mult * dim, dim),
        )

    def forward(self, ctx: torch.Tensor) -> torch.Tensor:
        return ctx + self.mlp(ctx)


def contrastive_chain_loss(
    anchor: torch.Tensor,
    positives: torch.Tensor,
    negatives: torch.Tensor,
    projection: nn.Linear,
    cfg: ContrastConfig,
) -> torch.Tensor:
    """InfoNCE over chain nodes with a single shared projection.

    anchor: (d_ctx,) pooled context vector.  positives: (P, d) node
    embeddings from the sample's own chain; negatives: (M, d) nodes from
    other samples.  Score is the dot product between the anchor and the
    projected node embedding, scaled by 1/temperature; the loss averages
    -log softmax(positive | positive + all negatives) over positives.
    """
    if positives.numel() == 0:
        raise EmptyPositives("no positive nodes")
    if negatives.numel() == 0:
        raise EmptyNegatives("no negative nodes")
    pos_scores = projection(positives) @ anchor / cfg.temperature  # (P,)
    neg_scores = projection(negatives) @ anchor / cfg.temperature  # (M,)
    # -log( e^p / (e^p + sum e^n) ) = logsumexp([p, n...]) - p
    stacked = torch.cat(
        [pos_scores[:, None], neg_scores[None].expand(len(pos_scores), -1)], dim=1
    )
    return (torch.logsumexp(stacked, dim=1) - pos_scores).mean()


class ChainDecoder(nn.Module):
    """Small autoregressive text decoder over the guidance context,
    used both as the chain-supervision head and as the reasoning module
    that produces answer text for answer-guided generation."""

    def __init__(self, vocab_size: int, dim_ctx: int, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.dim
        self.token_emb = nn.Embedding(vocab_size, d, padding_idx=PAD)
        self.pos_emb = nn.Embedding(cfg.max_len, d)
        self.memory_proj = nn.Linear(dim_ctx, d)
        layer = nn.TransformerDecoderLayer(
            d_model=d, nhead=cfg.heads, dim_feedforward=2 * d, dropout=0.0, batch_first=True
        )
        self.decoder = nn.TransformerDecoder(layer, num_layers=2)
        self.out = nn.Linear(d, vocab_size)

    def logits(
        self,
        input_ids: torch.Tensor,
        memory: torch.Tensor,
        memory_pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        L = input_ids.shape[1]
        if L > self.cfg.max_len:
            raise ValueError(f"target length {L} > max_len {self.cfg.max_len}")
        pos = torch.arange(L, device=input_ids.device)
        h = self.token_emb(input_ids) + self.pos_emb(pos)[None]
        causal = torch.triu(torch.ones(L, L, dtype=torch.bool, device=input_ids.device), 1)
        h = self.decoder(
            h,
            self.memory_proj(memory),
            tgt_mask=causal,
            memory_key_padding_mask=memory_pad_mask,
        )
        return self.out(h)

    @torch.no_grad()
    def greedy_decode(self, memory: torch.Tensor, max_len: int | None = None) -> list[int]:
        """Greedy token ids (without BOS/EOS) for a single (L, d_ctx) memory."""
        max_len = max_len or self.cfg.max_len
        ids = [BOS]
        mem = memory[None]
        for _ in range(max_len - 1):
            inp = torch.tensor([ids], dtype=torch.long, device=memory.device)
            nxt = int(self.logits(inp, mem)[0, -1].argmax())
            if nxt == EOS:
                break
            ids.append(nxt)
        return ids[1:]


def chain_supervision_loss(
    decoder: ChainDecoder,
    context: torch.Tensor,
    target_ids: list[int],
    context_pad_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Teacher-forced cross-entropy of the chain text, averaged per token."""
    if not target_ids:
        raise NoChainLabel("empty chain label")
    device = context.device
    inp = torch.tensor([[BOS] + list(target_ids)], dtype=torch.long, device=device)
    tgt = torch.tensor([list(target_ids) + [EOS]], dtype=torch.long, device=device)
    mem_mask = context_pad_mask[None] if context_pad_mask is not None else None
    logits = decoder.logits(inp, context[None], mem_mask)
    return F.cross_entropy(logits[0], tgt[0])


class GuidanceModel(nn.Module):
    """Bundle of every trainable component upstream of the denoiser."""

    def __init__(self, vocab: Vocab, enc_cfg: EncoderConfig, dim_ctx: int):
        super().__init__()
        self.enc_cfg = enc_cfg
        self.dim_ctx = dim_ctx
        self.text_encoder = TextEncoder(len(vocab), enc_cfg)
        self.image_encoder = QueryImageEncoder(enc_cfg)
        self.translator = FeatureTranslator(enc_cfg.dim, dim_ctx)
        self.predictive = PredictiveEncoder(dim_ctx)
        self.contrast_proj = nn.Linear(enc_cfg.dim, dim_ctx)
        self.chain_decoder = ChainDecoder(len(vocab), dim_ctx, enc_cfg)

    def encode_text_batch(self, seqs: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
        ids, pad_mask = pad_batch(seqs, device=next(self.parameters()).device)
        return self.text_encoder(ids, pad_mask), pad_mask

    def latent_context(
        self, images: torch.Tensor, question_seqs: list[list[int]]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Predictively-encoded multimodal context: image queries then
        question tokens, translated and pushed through the predictive
        head.  Returns (B, L, d_ctx) and its padding mask."""
        img_feats = self.image_encoder(images)
        txt_feats, txt_mask = self.encode_text_batch(question_seqs)
        fused = fuse(img_feats, txt_feats)
        img_mask = torch.zeros(
            images.shape[0], img_feats.shape[1], dtype=torch.bool, device=images.device
        )
        mask = torch.cat([img_mask, txt_mask], dim=1)
        return self.predictive(self.translator(fused)), mask

    def text_context(self, seqs: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
        feats, mask = self.encode_text_batch(seqs)
        return self.translator(feats), mask

    def node_embedding(self, phrase_seqs: list[list[int]]) -> torch.Tensor:
        """Mean-pooled text encoding of node phrases: (N, d)."""
        feats, mask = self.encode_text_batch(phrase_seqs)
        keep = (~mask).float()[..., None]
        return (feats * keep).sum(1) / keep.sum(1)

    def build_context_batch(
        self,
        paradigm: Paradigm,
        images: torch.Tensor,
        question_seqs: list[list[int]],
        answer_seqs: list[list[int] | None] | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Batched guidance context per paradigm; returns (B, L, d_ctx)
        plus padding mask.  QUESTION uses only the question text; ANSWER
        only the answer text; LATENT the multimodal predictive context;
        LATENT_PLUS concatenates the encoded answer text onto LATENT."""
        if paradigm == Paradigm.QUESTION:
            return self.text_context(question_seqs)
        if paradigm == Paradigm.ANSWER:
            seqs = self._require_answers(answer_seqs, len(question_seqs))
            return self.text_context(seqs)
        if paradigm == Paradigm.LATENT:
            return self.latent_context(images, question_seqs)
        if paradigm == Paradigm.LATENT_PLUS:
            seqs = self._require_answers(answer_seqs, len(question_seqs))
            lat, lat_mask = self.latent_context(images, question_seqs)
            ans, ans_mask = self.text_context(seqs)
            return torch.cat([lat, ans], dim=1), torch.cat([lat_mask, ans_mask], dim=1)
        raise ValueError(f"unknown paradigm {paradigm}")

    @staticmethod
    def _require_answers(answer_seqs, n) -> list[list[int]]:
        if answer_seqs is None or any(s is None for s in answer_seqs):
            raise MissingAnswerText("paradigm requires answer text for every sample")
        if len(answer_seqs) != n:
            raise ValueError("answer/question batch size mismatch")
        return list(answer_seqs)  # type: ignore[arg-type]


def build_context(
    model: GuidanceModel,
    paradigm: Paradigm,
    image: torch.Tensor,
    question_ids: list[int],
    answer_ids: list[int] | None = None,
) -> GuidanceContext:
    """Single-sample convenience wrapper around build_context_batch."""
    ctx, _ = model.build_context_batch(
        paradigm,
        image[None],
        [question_ids],
        [answer_ids] if answer_ids is not None else None,
    )
    return GuidanceContext(vectors=ctx[0], paradigm=paradigm)


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sinusoidal timestep embedding (t: (B,) float or long)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half
    )
    args = t.float()[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)
