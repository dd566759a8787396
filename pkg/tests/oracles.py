"""Independent brute-force reference implementations.

These are deliberately naive (double loops, direct formulas) and serve
as ground truth for the fast implementations.  Do not optimize them.
"""

from __future__ import annotations

import numpy as np


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def brute_sim_avg(preds: np.ndarray, gts: np.ndarray) -> float:
    n, k, _ = preds.shape
    total = 0.0
    for i in range(n):
        for j in range(k):
            total += cosine(preds[i, j], gts[i])
    return total / (n * k)


def brute_sim_best(preds: np.ndarray, gts: np.ndarray) -> float:
    n, k, _ = preds.shape
    total = 0.0
    for i in range(n):
        total += max(cosine(preds[i, j], gts[i]) for j in range(k))
    return total / n


def brute_auc(similarities: np.ndarray, grid: np.ndarray) -> float:
    sims = [max(0.0, float(s)) for s in similarities]
    accs = []
    for tau in grid:
        hits = sum(1 for s in sims if s >= tau)
        accs.append(hits / len(sims))
    return sum(accs) / len(accs)


def brute_fid(a: np.ndarray, b: np.ndarray, eps: float = 1e-6) -> float:
    """Fréchet distance via eigendecomposition of the covariance product."""
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    ca = np.cov(a, rowvar=False) + eps * np.eye(a.shape[1])
    cb = np.cov(b, rowvar=False) + eps * np.eye(b.shape[1])
    prod = ca @ cb
    eigvals = np.linalg.eigvals(prod)
    sqrt_trace = np.sqrt(np.clip(eigvals.real, 0.0, None)).sum()
    return float(((mu_a - mu_b) ** 2).sum() + np.trace(ca) + np.trace(cb) - 2.0 * sqrt_trace)


def brute_cell_ssd(cells: np.ndarray, templates: np.ndarray) -> np.ndarray:
    n, d = cells.shape
    m = templates.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                diff = cells[i, k] - templates[j, k]
                s += diff * diff
            out[i, j] = s
    return out


def brute_frame_diffs(frames: np.ndarray) -> np.ndarray:
    out = []
    for i in range(len(frames) - 1):
        out.append(float(np.abs(frames[i + 1] - frames[i]).mean()))
    return np.asarray(out)


def finite_difference_grads(loss_fn, params: list, eps: float = 1e-6) -> list:
    """Central finite differences of a scalar torch loss w.r.t. tensors.

    Works element by element; intended for <= 10-parameter probes with
    float64 tensors.
    """
    import torch

    grads = []
    for p in params:
        g = torch.zeros_like(p)
        flat = p.view(-1)
        gflat = g.view(-1)
        for idx in range(flat.numel()):
            orig = flat[idx].item()
            flat[idx] = orig + eps
            hi = float(loss_fn())
            flat[idx] = orig - eps
            lo = float(loss_fn())
            flat[idx] = orig
            gflat[idx] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads
