"""Evaluation suite: frozen embedder, metrics, decoding, reporting."""

from .decode import DecodeResult, decode_state, decode_state_full
from .embedder import (
    EMBED_DIM,
    Embedder,
    EmbedderMissing,
    load_embedder,
    probe_accuracy,
    save_embedder,
    train_embedder,
)
from .metrics import (
    DEFAULT_GRID,
    DEFAULT_K,
    EmptyGrid,
    InvalidRecord,
    JudgmentRecord,
    SetTooSmall,
    ShapeMismatch,
    auc,
    fid,
    sim_avg,
    sim_best_at_k,
    state_match_rate,
    tally_human,
)
from .report import COLUMNS, METRICS, TOTAL, EvalReport, MalformedReport, render_report

__all__ = [
    "COLUMNS",
    "DEFAULT_GRID",
    "DEFAULT_K",
    "DecodeResult",
    "EMBED_DIM",
    "Embedder",
    "EmbedderMissing",
    "EmptyGrid",
    "EvalReport",
    "InvalidRecord",
    "JudgmentRecord",
    "METRICS",
    "MalformedReport",
    "SetTooSmall",
    "ShapeMismatch",
    "TOTAL",
    "auc",
    "decode_state",
    "decode_state_full",
    "fid",
    "load_embedder",
    "probe_accuracy",
    "render_report",
    "save_embedder",
    "sim_avg",
    "sim_best_at_k",
    "state_match_rate",
    "tally_human",
    "train_embedder",
]
