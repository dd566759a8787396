"""Dataset generation: samples, PNG images, and the JSONL manifest.

Layout of a generated dataset directory:

    <out>/meta.json        generation config + schema version
    <out>/vocab.txt        closed vocabulary, one token per line
    <out>/images/*.png     deterministic renders (init/answer per sample)
    <out>/manifest.jsonl   one record per sample (schema v1)

Manifest record fields: schema_version, sample_id, category, question,
init_image, answer_image (paths relative to the manifest), seed,
condition, init_state, answer_state, chain (null unless the sample is
chain-annotated).
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from PIL import Image

from ..chains import CausalChain
from .questions import phrase_question, vocabulary
from .render import render
from .rules import RuleTable, apply_condition, default_rule_table
from .sampler import sample_scene
from .state import CATEGORY_ORDER, Category, Condition, SceneState

SCHEMA_VERSION = 1

#: Category shares (scenery, more, fewer, entities, emotion).
DEFAULT_CATEGORY_MIX = (0.05, 0.22, 0.16, 0.40, 0.17)

#: Chain-annotated share of the corpus.
DEFAULT_CHAIN_FRACTION = 3809 / 17524


@dataclasses.dataclass
class SampleRecord:
    sample_id: str
    category: Category
    question: str
    init_image: str
    answer_image: str
    seed: int
    condition: Condition
    init_state: SceneState
    answer_state: SceneState
    chain: CausalChain | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "sample_id": self.sample_id,
            "category": self.category.value,
            "question": self.question,
            "init_image": self.init_image,
            "answer_image": self.answer_image,
            "seed": self.seed,
            "condition": self.condition.to_dict(),
            "init_state": self.init_state.to_dict(),
            "answer_state": self.answer_state.to_dict(),
            "chain": self.chain.to_dict() if self.chain is not None else None,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "SampleRecord":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {d.get('schema_version')}")
        return SampleRecord(
            sample_id=d["sample_id"],
            category=Category(d["category"]),
            question=d["question"],
            init_image=d["init_image"],
            answer_image=d["answer_image"],
            seed=int(d["seed"]),
            condition=Condition.from_dict(d["condition"]),
            init_state=SceneState.from_dict(d["init_state"]),
            answer_state=SceneState.from_dict(d["answer_state"]),
            chain=CausalChain.from_dict(d["chain"]) if d.get("chain") else None,
        )


def write_manifest(records: Iterable[dict[str, Any]], path: Path) -> None:
    """Atomic JSONL write (temp file + rename)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_manifest(path: Path) -> list[SampleRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(SampleRecord.from_dict(json.loads(line)))
    return out


def _save_png(img: np.ndarray, path: Path) -> None:
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def generate_samples(
    n: int,
    seed: int,
    category_mix: Sequence[float] = DEFAULT_CATEGORY_MIX,
    chain_fraction: float = DEFAULT_CHAIN_FRACTION,
    canvas_size: int = 64,
    table: RuleTable | None = None,
) -> list[tuple[SampleRecord, np.ndarray, np.ndarray]]:
    """Generate n samples in memory; returns (record, init_img, answer_img)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mix = np.asarray(category_mix, dtype=np.float64)
    if mix.shape != (len(CATEGORY_ORDER),) or not np.isclose(mix.sum(), 1.0):
        raise ValueError("category_mix must be 5 probabilities summing to 1")
    if not 0.0 <= chain_fraction <= 1.0:
        raise ValueError("chain_fraction must be in [0, 1]")
    table = table or default_rule_table()

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDA7A]))
    cats = rng.choice(len(CATEGORY_ORDER), size=n, p=mix)
    sample_seeds = rng.integers(0, 2**31 - 1, size=n)
    n_chain = round(n * chain_fraction)
    chain_ids = set(rng.permutation(n)[:n_chain].tolist())

    out = []
    for i in range(n):
        category = CATEGORY_ORDER[int(cats[i])]
        s = int(sample_seeds[i])
        init, cond = sample_scene(s, category, table, canvas_size)
        answer, chain = apply_condition(init, cond, table)
        question = phrase_question(cond, category, table)
        sid = f"s{i:06d}"
        rec = SampleRecord(
            sample_id=sid,
            category=category,
            question=question,
            init_image=f"images/{sid}_init.png",
            answer_image=f"images/{sid}_answer.png",
            seed=s,
            condition=cond,
            init_state=init,
            answer_state=answer,
            chain=chain if i in chain_ids else None,
        )
        out.append((rec, render(init), render(answer)))
    return out


def make_dataset(
    out_dir: Path,
    n: int,
    seed: int,
    category_mix: Sequence[float] = DEFAULT_CATEGORY_MIX,
    chain_fraction: float = DEFAULT_CHAIN_FRACTION,
    canvas_size: int = 64,
    table: RuleTable | None = None,
) -> Path:
    """Write a dataset directory; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    table = table or default_rule_table()
    samples = generate_samples(n, seed, category_mix, chain_fraction, canvas_size, table)
    for rec, init_img, answer_img in samples:
        _save_png(init_img, out_dir / rec.init_image)
        _save_png(answer_img, out_dir / rec.answer_image)
    with open(out_dir / "vocab.txt", "w") as fh:
        fh.write("\n".join(vocabulary(table)) + "\n")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "n": n,
        "seed": seed,
        "category_mix": list(category_mix),
        "chain_fraction": chain_fraction,
        "canvas_size": canvas_size,
        "rule_table_version": table.version,
    }
    with open(out_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    manifest = out_dir / "manifest.jsonl"
    write_manifest((rec.to_dict() for rec, _, _ in samples), manifest)
    return manifest
