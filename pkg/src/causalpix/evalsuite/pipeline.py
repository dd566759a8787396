"""End-to-end evaluation: generate candidates, embed, score, report."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..diffusion import sample as diffusion_sample
from ..encoders import image_to_tensor, tensor_to_image
from ..guidance import Paradigm
from ..training import Batch, CausalPixModel, LoadedSample, encode_answer_text
from ..world.state import CATEGORY_ORDER
from .embedder import Embedder
from .metrics import DEFAULT_GRID, DEFAULT_K, auc, fid, sim_avg, sim_best_at_k, state_match_rate
from .report import TOTAL, EvalReport

DEFAULT_SEEDS = tuple(range(DEFAULT_K))


@torch.no_grad()
def generate_candidates(
    model: CausalPixModel,
    samples: Sequence[LoadedSample],
    seeds: Sequence[int] = DEFAULT_SEEDS,
    num_steps: int | None = None,
    batch_size: int = 16,
    use_decoded_answer: bool | None = None,
    eta: float = 0.0,
    log=None,
) -> list[list[np.ndarray]]:
    """K candidate images (uint8 arrays) per sample, one per seed.

    Answer-conditioned paradigms take their answer text from the chain
    decoder's greedy output at inference (``use_decoded_answer`` True,
    the default for those paradigms); pass False to feed the reference
    text instead, e.g. for upper-bound probes.
    """
    model.eval()
    paradigm = model.paradigm
    needs_answer = paradigm in (Paradigm.ANSWER, Paradigm.LATENT_PLUS)
    if use_decoded_answer is None:
        use_decoded_answer = needs_answer

    out: list[list[np.ndarray]] = []
    for lo in range(0, len(samples), batch_size):
        rows = samples[lo : lo + batch_size]
        init = torch.stack([image_to_tensor(s.init) for s in rows])
        questions = [model.vocab.tokenize(s.record.question) for s in rows]
        answers: list[list[int]] | None = None
        if needs_answer:
            if use_decoded_answer:
                # decode answer text from the latent multimodal context
                lat, lat_mask = model.guidance.latent_context(init, questions)
                answers = []
                for i in range(len(rows)):
                    ids = model.guidance.chain_decoder.greedy_decode(lat[i])
                    answers.append(ids or model.vocab.tokenize(rows[i].record.question))
            else:
                answers = [encode_answer_text(s.record, model.vocab) for s in rows]
        ctx, mask = model.guidance.build_context_batch(paradigm, init, questions, answers)
        row_out: list[list[np.ndarray]] = [[] for _ in rows]
        for seed in seeds:
            x = diffusion_sample(
                model.denoiser, model.schedule, init, ctx, mask, seed=seed, eta=eta,
                num_steps=num_steps
            )
            for i in range(len(rows)):
                row_out[i].append(tensor_to_image(x[i]))
        out.extend(row_out)
        if log is not None:
            log(f"generated {min(lo + batch_size, len(samples))}/{len(samples)} samples x {len(seeds)} seeds")
    return out


@torch.no_grad()
def _embed_images(embedder: Embedder, images: Sequence[np.ndarray], batch: int = 128) -> np.ndarray:
    feats = []
    for lo in range(0, len(images), batch):
        t = torch.stack([image_to_tensor(im) for im in images[lo : lo + batch]])
        feats.append(embedder.embed(t).numpy())
    return np.concatenate(feats).astype(np.float64)


@torch.no_grad()
def _feature_images(embedder: Embedder, images: Sequence[np.ndarray], batch: int = 128) -> np.ndarray:
    feats = []
    for lo in range(0, len(images), batch):
        t = torch.stack([image_to_tensor(im) for im in images[lo : lo + batch]])
        feats.append(embedder.features(t).numpy())
    return np.concatenate(feats).astype(np.float64)


def score_candidates(
    samples: Sequence[LoadedSample],
    candidates: Sequence[Sequence[np.ndarray]],
    embedder: Embedder,
    method: str,
    grid: np.ndarray = DEFAULT_GRID,
    skip_state_match: bool = False,
) -> EvalReport:
    """Compute every metric, per category and for the whole set."""
    if len(samples) != len(candidates):
        raise ValueError("samples/candidates length mismatch")
    k = len(candidates[0])
    if any(len(c) != k for c in candidates):
        raise ValueError("uneven candidate counts")

    flat = [im for cands in candidates for im in cands]
    pred_emb = _embed_images(embedder, flat).reshape(len(samples), k, -1)
    gt_emb = _embed_images(embedder, [s.answer for s in samples])
    pred_feat = _feature_images(embedder, flat).reshape(len(samples), k, -1)
    gt_feat = _feature_images(embedder, [s.answer for s in samples])

    report = EvalReport(
        meta={
            "k": k,
            "grid": f"{len(grid)} points in [{grid[0]}, {grid[-1]}]",
            "n": len(samples),
        }
    )
    groups: dict[str, list[int]] = {TOTAL: list(range(len(samples)))}
    for cat in CATEGORY_ORDER:
        idx = [i for i, s in enumerate(samples) if s.record.category == cat]
        if idx:
            groups[cat.value] = idx

    cos = np.einsum(
        "nkd,nd->nk",
        pred_emb / np.linalg.norm(pred_emb, axis=2, keepdims=True),
        gt_emb / np.linalg.norm(gt_emb, axis=1, keepdims=True),
    )
    for cat, idx in groups.items():
        p, g = pred_emb[idx], gt_emb[idx]
        report.set_value(method, cat, "sim_avg", sim_avg(p, g))
        report.set_value(method, cat, "sim_best_at_k", sim_best_at_k(p, g))
        report.set_value(method, cat, "auc_avg", auc(cos[idx].mean(axis=1), grid))
        report.set_value(method, cat, "auc_best_at_k", auc(cos[idx].max(axis=1), grid))
        if len(idx) >= 2:
            report.set_value(
                method, cat, "fid", fid(pred_feat[idx].reshape(len(idx) * k, -1), gt_feat[idx])
            )
        if not skip_state_match:
            gen = [candidates[i][0] for i in idx]
            report.set_value(
                method,
                cat,
                "state_match_rate",
                state_match_rate(
                    gen,
                    [samples[i].record.init_state for i in idx],
                    [samples[i].record.answer_state for i in idx],
                ),
            )
    return report


def contact_sheet(
    samples: Sequence[LoadedSample],
    candidates: Sequence[Sequence[np.ndarray]],
    max_rows: int = 16,
    pad: int = 2,
) -> np.ndarray:
    """Side-by-side grid: init | ground truth | the K candidates."""
    rows = []
    for s, cands in list(zip(samples, candidates))[:max_rows]:
        rows.append([s.init, s.answer, *cands])
    h, w = rows[0][0].shape[:2]
    n_cols = len(rows[0])
    sheet = np.full(
        (len(rows) * (h + pad) + pad, n_cols * (w + pad) + pad, 3), 255, dtype=np.uint8
    )
    for r, imgs in enumerate(rows):
        for c, im in enumerate(imgs):
            y = pad + r * (h + pad)
            x = pad + c * (w + pad)
            sheet[y : y + h, x : x + w] = im
    return sheet
