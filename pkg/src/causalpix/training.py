"""Joint training of the guidance stack and the conditional denoiser.

The run is described by a flat RunConfig (parseable from a key=value
file).  The loss is the denoising MSE plus, on chain-annotated samples,
the contrastive chain-node term and the chain-text decoding term.
Checkpoints carry a JSON header with a payload checksum and a hash of
the architecture-relevant config, so silently mismatched reloads fail
loudly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
import struct
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .chains import InsufficientNegatives, sample_contrast_nodes
from .diffusion import (
    ConditionalDenoiser,
    DenoiserConfig,
    NoiseSchedule,
    diffusion_loss,
)
from .encoders import EncoderConfig, Vocab, image_to_tensor
from .guidance import ContrastConfig, GuidanceModel, Paradigm, contrastive_chain_loss, chain_supervision_loss
from .world.dataset import SampleRecord


class ConfigError(ValueError):
    pass


class UnknownConfigKey(ConfigError):
    pass


class NonFiniteLoss(RuntimeError):
    pass


class CorruptFile(RuntimeError):
    pass


class ConfigHashMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything that defines a training run, flat and serializable."""

    paradigm: str = "latent"
    lr: float = 3e-5
    lr_final: float = 0.0  # >0 enables cosine decay from lr to this value
    batch_size: int = 16
    epochs: int = 20
    max_steps: int = 0  # 0 = no cap
    lambda_contrast: float = 0.1
    lambda_chain: float = 0.5
    temperature: float = 0.07
    negatives: int = 15
    grad_clip: float = 1.0
    ema_decay: float = 0.0  # 0 = off; e.g. 0.999 smooths eval weights
    seed: int = 0
    log_every: int = 50
    # architecture
    enc_dim: int = 128
    enc_layers: int = 2
    enc_heads: int = 4
    num_queries: int = 8
    max_len: int = 64
    dim_ctx: int = 96
    base_channels: int = 32
    channel_mults: str = "1,2,4"
    diffusion_steps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    image_size: int = 64

    def __post_init__(self) -> None:
        Paradigm(self.paradigm)
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("lr, batch_size and epochs must be positive")
        if min(self.lambda_contrast, self.lambda_chain) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("ema_decay must be in [0, 1)")
        if self.lr_final < 0 or self.lr_final > self.lr:
            raise ConfigError("lr_final must be in [0, lr]")
        self.mults()

    def mults(self) -> tuple[int, ...]:
        try:
            out = tuple(int(x) for x in self.channel_mults.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad channel_mults {self.channel_mults!r}") from exc
        if not out or min(out) < 1:
            raise ConfigError("channel_mults must be positive integers")
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


#: Config fields that must agree between a checkpoint and the code
#: loading it (they fix tensor shapes or data semantics).
ARCH_FIELDS = (
    "paradigm",
    "enc_dim",
    "enc_layers",
    "enc_heads",
    "num_queries",
    "max_len",
    "dim_ctx",
    "base_channels",
    "channel_mults",
    "diffusion_steps",
    "beta_start",
    "beta_end",
    "image_size",
)


def config_hash(cfg: RunConfig) -> str:
    d = cfg.to_dict()
    blob = json.dumps({k: d[k] for k in ARCH_FIELDS}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Flat key=value config; '#' starts a comment; unknown keys fail."""
    known = {f.name: f for f in fields(RunConfig)}
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise UnknownConfigKey(f"line {lineno}: unknown key {key!r}")
        ftype = known[key].type
        try:
            if ftype == "int":
                overrides[key] = int(value)
            elif ftype == "float":
                overrides[key] = float(value)
            else:
                overrides[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return dataclasses.replace(base or RunConfig(), **overrides)


def load_config(path: Path) -> RunConfig:
    return parse_config_text(Path(path).read_text())


class CausalPixModel(nn.Module):
    """Guidance stack + denoiser + schedule, built from one RunConfig."""

    def __init__(self, cfg: RunConfig, vocab: Vocab):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab
        enc_cfg = EncoderConfig(
            dim=cfg.enc_dim,
            layers=cfg.enc_layers,
            heads=cfg.enc_heads,
            num_queries=cfg.num_queries,
            max_len=cfg.max_len,
        )
        self.guidance = GuidanceModel(vocab, enc_cfg, cfg.dim_ctx)
        self.denoiser = ConditionalDenoiser(
            DenoiserConfig(
                base_channels=cfg.base_channels,
                channel_mults=cfg.mults(),
                dim_ctx=cfg.dim_ctx,
            )
        )
        self.schedule = NoiseSchedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)

    @property
    def paradigm(self) -> Paradigm:
        return Paradigm(self.cfg.paradigm)


@dataclass
class LoadedSample:
    """A manifest record together with its decoded pixel arrays."""

    record: SampleRecord
    init: np.ndarray  # uint8 (H, W, 3)
    answer: np.ndarray


def load_dataset(data_dir: Path) -> list[LoadedSample]:
    """Read a dataset directory (manifest.jsonl + images/) into memory."""
    from PIL import Image

    from .world.dataset import read_manifest

    data_dir = Path(data_dir)
    out = []
    for rec in read_manifest(data_dir / "manifest.jsonl"):
        init = np.asarray(Image.open(data_dir / rec.init_image).convert("RGB"))
        answer = np.asarray(Image.open(data_dir / rec.answer_image).convert("RGB"))
        out.append(LoadedSample(rec, init, answer))
    return out


def wrap_generated(rows: Sequence[tuple]) -> list[LoadedSample]:
    """Adapt generate_samples output (record, init, answer) tuples."""
    return [LoadedSample(rec, init, answer) for rec, init, answer in rows]


@dataclass
class Batch:
    init_images: torch.Tensor  # (B, 3, H, W), [-1, 1]
    answer_images: torch.Tensor
    question_ids: list[list[int]]
    answer_ids: list[list[int]]  # chain text when annotated, else question
    chain_indices: list[int | None]  # index into the corpus chain list


def encode_answer_text(record: SampleRecord, vocab: Vocab) -> list[int]:
    """Target text for answer-guided paradigms: the linearized chain
    when the sample carries one, otherwise the question itself."""
    from .chains import linearize

    if record.chain is not None:
        return vocab.tokenize(linearize(record.chain))
    return vocab.tokenize(record.question)


def make_batch(
    samples: Sequence[LoadedSample],
    vocab: Vocab,
    chain_index_of: dict[str, int],
    device=None,
) -> Batch:
    init = torch.stack([image_to_tensor(s.init) for s in samples]).to(device)
    answer = torch.stack([image_to_tensor(s.answer) for s in samples]).to(device)
    return Batch(
        init_images=init,
        answer_images=answer,
        question_ids=[vocab.tokenize(s.record.question) for s in samples],
        answer_ids=[encode_answer_text(s.record, vocab) for s in samples],
        chain_indices=[chain_index_of.get(s.record.sample_id) for s in samples],
    )


def total_loss(
    model: CausalPixModel,
    batch: Batch,
    chains: Sequence,
    rng: np.random.Generator,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Joint objective with per-term breakdown.

    denoise-MSE over the whole batch; the contrastive and chain-text
    terms average over the chain-annotated samples only (skipping chains
    without non-root nodes, and samples whose negative pool is too
    small, for the contrastive term).
    """
    cfg = model.cfg
    ctx, mask = model.guidance.build_context_batch(
        model.paradigm, batch.init_images, batch.question_ids, batch.answer_ids
    )
    l_diff = diffusion_loss(
        model.denoiser,
        model.schedule,
        batch.answer_images,
        batch.init_images,
        ctx,
        mask,
        generator,
    )

    contrast_cfg = ContrastConfig(cfg.temperature, cfg.negatives)
    keep = (~mask).float()[..., None]
    anchors = (ctx * keep).sum(1) / keep.sum(1)  # (B, d_ctx)

    l_contrast = torch.zeros((), dtype=l_diff.dtype)
    l_chain = torch.zeros((), dtype=l_diff.dtype)
    n_contrast = n_chain = 0
    for i, chain_idx in enumerate(batch.chain_indices):
        if chain_idx is None:
            continue
        try:
            pos_nodes, neg_nodes = sample_contrast_nodes(
                chains, chain_idx, cfg.negatives, rng
            )
        except (ValueError, InsufficientNegatives):
            pos_nodes = []
        if pos_nodes:
            pos = model.guidance.node_embedding(
                [model.vocab.tokenize(n.phrase()) for n in pos_nodes]
            )
            neg = model.guidance.node_embedding(
                [model.vocab.tokenize(n.phrase()) for n in neg_nodes]
            )
            l_contrast = l_contrast + contrastive_chain_loss(
                anchors[i], pos, neg, model.guidance.contrast_proj, contrast_cfg
            )
            n_contrast += 1
        l_chain = l_chain + chain_supervision_loss(
            model.guidance.chain_decoder, ctx[i], batch.answer_ids[i], mask[i]
        )
        n_chain += 1

    if n_contrast:
        l_contrast = l_contrast / n_contrast
    if n_chain:
        l_chain = l_chain / n_chain
    loss = l_diff + cfg.lambda_contrast * l_contrast + cfg.lambda_chain * l_chain
    breakdown = {
        "total": float(loss.detach()),
        "denoise": float(l_diff.detach()),
        "contrast": float(l_contrast.detach()) if n_contrast else 0.0,
        "chain_text": float(l_chain.detach()) if n_chain else 0.0,
        "n_contrast": float(n_contrast),
        "n_chain": float(n_chain),
    }
    return loss, breakdown


def _derive_torch_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def save_checkpoint(path: Path, model: CausalPixModel, step: int, extra: dict | None = None) -> None:
    """Write header-JSON + torch payload with a payload checksum."""
    buf = io.BytesIO()
    torch.save({"state_dict": model.state_dict()}, buf)
    payload = buf.getvalue()
    header = json.dumps(
        {
            "format": "causalpix-checkpoint-v1",
            "step": step,
            "config": model.cfg.to_dict(),
            "config_hash": config_hash(model.cfg),
            "vocab": list(model.vocab.words),
            "payload_sha256": hashlib.sha256(payload).hexdigest(),
            "extra": extra or {},
        },
        sort_keys=True,
    ).encode()
    tmp = Path(path).with_suffix(".tmp")
    with open(tmp, "wb") as f:
        f.write(struct.pack(">Q", len(header)))
        f.write(header)
        f.write(payload)
    tmp.replace(path)


def load_checkpoint(
    path: Path, expected: RunConfig | None = None, allow_config_mismatch: bool = False
) -> tuple[CausalPixModel, dict]:
    """Rebuild the model from a checkpoint; verifies the payload
    checksum and (unless overridden) the architecture config hash."""
    from .encoders import _SPECIALS

    raw = Path(path).read_bytes()
    try:
        (hlen,) = struct.unpack(">Q", raw[:8])
        header = json.loads(raw[8 : 8 + hlen])
        payload = raw[8 + hlen :]
    except (struct.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: unreadable checkpoint") from exc
    if header.get("format") != "causalpix-checkpoint-v1":
        raise CorruptFile(f"{path}: not a checkpoint file")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CorruptFile(f"{path}: payload checksum mismatch")

    cfg = RunConfig(**header["config"])
    if expected is not None and config_hash(expected) != header["config_hash"]:
        if not allow_config_mismatch:
            raise ConfigHashMismatch(
                f"{path}: checkpoint config hash {header['config_hash'][:12]} does not "
                f"match requested config {config_hash(expected)[:12]}"
            )
    vocab = Vocab(header["vocab"][len(_SPECIALS) :])
    model = CausalPixModel(cfg, vocab)
    state = torch.load(io.BytesIO(payload), weights_only=True)
    model.load_state_dict(state["state_dict"])
    return model, header


def train(
    cfg: RunConfig,
    samples: Sequence[LoadedSample],
    out_dir: Path,
    vocab: Vocab | None = None,
    checkpoint_every: int = 0,
    log=print,
) -> tuple[CausalPixModel, list[dict]]:
    """Run joint training over a loaded dataset; returns the model and
    the per-logging-interval loss history (also written to out_dir)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = vocab or Vocab.default()

    torch.manual_seed(_derive_torch_seed(cfg.seed, 0x70C4))
    model = CausalPixModel(cfg, vocab)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    chains = [s.record.chain for s in samples if s.record.chain is not None]
    chain_index_of = {
        s.record.sample_id: i
        for i, s in enumerate(s for s in samples if s.record.chain is not None)
    }

    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x02DE2]))
    neg_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x9E6]))
    noise_gen = torch.Generator().manual_seed(_derive_torch_seed(cfg.seed, 0x9015E))

    ema: dict[str, torch.Tensor] | None = None
    if cfg.ema_decay > 0:
        ema = {k: v.detach().clone() for k, v in model.state_dict().items()}

    steps_per_epoch = math.ceil(len(samples) / cfg.batch_size)
    total_steps = cfg.max_steps or cfg.epochs * steps_per_epoch

    history: list[dict] = []
    step = 0
    t_start = time.time()
    done = False
    for epoch in range(cfg.epochs):
        perm = order_rng.permutation(len(samples))
        for lo in range(0, len(samples), cfg.batch_size):
            rows = [samples[i] for i in perm[lo : lo + cfg.batch_size]]
            batch = make_batch(rows, vocab, chain_index_of)
            if cfg.lr_final > 0:
                frac = min(step / max(total_steps - 1, 1), 1.0)
                lr_now = cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1 + math.cos(math.pi * frac))
                for group in opt.param_groups:
                    group["lr"] = lr_now
            loss, breakdown = total_loss(model, batch, chains, neg_rng, noise_gen)
            if not math.isfinite(breakdown["total"]):
                raise NonFiniteLoss(f"step {step}: loss {breakdown['total']}")
            opt.zero_grad()
            loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            step += 1
            if ema is not None:
                with torch.no_grad():
                    for k, v in model.state_dict().items():
                        if v.dtype.is_floating_point:
                            ema[k].mul_(cfg.ema_decay).add_(v, alpha=1 - cfg.ema_decay)
                        else:
                            ema[k].copy_(v)
            if step % cfg.log_every == 0 or step == 1:
                entry = {"step": step, "epoch": epoch, "elapsed": time.time() - t_start, **breakdown}
                history.append(entry)
                log(
                    f"step {step:6d} epoch {epoch:3d} "
                    f"total {breakdown['total']:.4f} denoise {breakdown['denoise']:.4f} "
                    f"contrast {breakdown['contrast']:.4f} chain {breakdown['chain_text']:.4f}"
                )
            if checkpoint_every and step % checkpoint_every == 0:
                save_checkpoint(out_dir / f"ckpt_{step:07d}.pt", model, step)
            if cfg.max_steps and step >= cfg.max_steps:
                done = True
                break
        if done:
            break

    if ema is not None:
        # the averaged weights are the ones meant for evaluation
        model.load_state_dict(ema)
    save_checkpoint(out_dir / "ckpt_final.pt", model, step)
    (out_dir / "history.json").write_text(json.dumps(history, indent=1))
    (out_dir / "config.txt").write_text(
        "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
    )
    return model, history
