"""Command-line surface.

Subcommands: gen-data, segment, train, sample, evaluate, rate, report.
Exit codes: 0 success, 1 usage error, 2 data error (missing or invalid
inputs), 3 runtime failure.  All file outputs are written atomically
(temp file + rename).
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

# Usage errors (bad flags, unknown keys) exit 1 per the documented codes.
click.UsageError.exit_code = 1

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    """Map exception families onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        from .training import ConfigError

        try:
            return fn(*args, **kwargs)
        except (click.ClickException, SystemExit):
            raise
        except ConfigError as exc:
            _fail(EXIT_USAGE, str(exc))
        except (FileNotFoundError, ValueError, KeyError) as exc:
            _fail(EXIT_DATA, str(exc))
        except RuntimeError as exc:
            _fail(EXIT_RUNTIME, str(exc))

    return wrapper


def _atomic_write_bytes(path: Path, blob: bytes) -> None:
    tmp = Path(path).with_suffix(".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def _save_png(img: np.ndarray, path: Path) -> None:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    _atomic_write_bytes(path, buf.getvalue())


@click.group()
def main() -> None:
    """Causal image generation microworld: data, training, evaluation."""


@main.command("gen-data")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True, help="Output dataset directory.")
@click.option("--n", default=256, show_default=True, help="Number of samples.")
@click.option("--seed", default=0, show_default=True, help="Generation seed.")
@click.option("--category-mix", default=None, help="Five comma-separated probabilities summing to 1.")
@click.option("--chain-fraction", default=None, type=float, help="Fraction of samples carrying chain annotations.")
@click.option("--canvas-size", default=64, show_default=True, help="Image side length (multiple of 8).")
@click.option("--val", "n_val", default=None, type=int, help="Validation split size (default: proportional).")
@click.option("--test", "n_test", default=None, type=int, help="Test split size (default: proportional).")
@handle_errors
def gen_data(out_dir, n, seed, category_mix, chain_fraction, canvas_size, n_val, n_test):
    """Generate a dataset directory with train/val/test split manifests."""
    from .ingest import SplitSpec, corpus_stats, format_stats
    from .ingest import split as split_records
    from .world.dataset import (
        DEFAULT_CATEGORY_MIX,
        DEFAULT_CHAIN_FRACTION,
        make_dataset,
        read_manifest,
        write_manifest,
    )

    mix = DEFAULT_CATEGORY_MIX
    if category_mix is not None:
        mix = tuple(float(x) for x in category_mix.split(","))
    frac = DEFAULT_CHAIN_FRACTION if chain_fraction is None else chain_fraction

    manifest = make_dataset(out_dir, n, seed, mix, frac, canvas_size)
    records = read_manifest(manifest)

    if n_val is None:
        n_val = round(n * 1000 / 17524)
    if n_test is None:
        n_test = round(n * 1000 / 17524)
    spec = SplitSpec(train=n - n_val - n_test, val=n_val, test=n_test, seed=seed)
    parts = split_records(records, spec)
    for name, recs in zip(("train", "val", "test"), parts):
        part_dir = Path(out_dir) / name
        part_dir.mkdir(exist_ok=True)
        import dataclasses

        rebased = [
            dataclasses.replace(
                r, init_image=f"../{r.init_image}", answer_image=f"../{r.answer_image}"
            )
            for r in recs
        ]
        write_manifest([r.to_dict() for r in rebased], part_dir / "manifest.jsonl")
    click.echo(format_stats(corpus_stats(records)))
    click.echo(f"wrote {n} samples to {out_dir} (split {spec.train}/{spec.val}/{spec.test})")


@main.command()
@click.option("--frames", "frames_dir", type=click.Path(path_type=Path), required=True, help="Directory of ordered image frames.")
@click.option("--pixel-thresh", default=10.0, show_default=True, help="Mean-absolute-difference cut threshold.")
@click.option("--min-len", default=1, show_default=True, help="Minimum segment length in frames.")
@click.option("--out", "out_file", type=click.Path(path_type=Path), default=None, help="Optional JSON output path.")
@handle_errors
def segment(frames_dir, pixel_thresh, min_len, out_file):
    """Cut a frame sequence into shots at hard scene changes."""
    from .ingest import load_frames_dir, segment_frames

    frames = load_frames_dir(frames_dir)
    segs = segment_frames(frames, pixel_thresh, min_len)
    for s in segs:
        click.echo(f"[{s.start_frame:6d}, {s.end_frame:6d}]  ({s.length} frames)")
    click.echo(f"{len(segs)} segments over {len(frames)} frames")
    if out_file is not None:
        blob = json.dumps(
            [{"start_frame": s.start_frame, "end_frame": s.end_frame} for s in segs], indent=1
        ).encode()
        _atomic_write_bytes(out_file, blob)


def _load_run_config(config_path, overrides):
    import dataclasses

    from .training import RunConfig, load_config, parse_config_text

    cfg = load_config(config_path) if config_path else RunConfig()
    if overrides:
        cfg = parse_config_text("\n".join(overrides), base=cfg)
    return cfg


@main.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="key=value config file (RunConfig keys).")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True, help="Dataset directory (or split subdirectory).")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True, help="Run output directory.")
@click.option("-o", "--override", "overrides", multiple=True, help="key=value config override (repeatable; applied after the file).")
@click.option("--checkpoint-every", default=0, show_default=True, help="Checkpoint interval in steps (0 = final only).")
@handle_errors
def train(config_path, data_dir, out_dir, overrides, checkpoint_every):
    """Train the guidance stack and conditional denoiser jointly."""
    from .encoders import Vocab
    from .training import load_dataset
    from .training import train as run_train

    cfg = _load_run_config(config_path, overrides)
    samples = load_dataset(data_dir)
    vocab_path = Path(data_dir) / "vocab.txt"
    if not vocab_path.exists():
        vocab_path = Path(data_dir).parent / "vocab.txt"
    vocab = Vocab.load(vocab_path) if vocab_path.exists() else None
    _, history = run_train(
        cfg, samples, out_dir, vocab=vocab, checkpoint_every=checkpoint_every, log=click.echo
    )
    click.echo(f"finished: final loss {history[-1]['total']:.4f}, checkpoint at {out_dir}/ckpt_final.pt")


@main.command()
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True, help="Trained checkpoint file.")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True, help="Dataset directory to draw inputs from.")
@click.option("--index", default=0, show_default=True, help="Sample index within the manifest.")
@click.option("--seed", default=0, show_default=True, help="Sampling seed.")
@click.option("--num-steps", default=None, type=int, help="Reverse-process steps (default: full schedule).")
@click.option("--eta", default=0.0, show_default=True, help="Reverse-process stochasticity (0 = deterministic, 1 = ancestral).")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True, help="Output PNG path.")
@handle_errors
def sample(checkpoint, data_dir, index, seed, num_steps, eta, out_path):
    """Generate one answer image for a dataset sample."""
    from .evalsuite.pipeline import generate_candidates
    from .training import load_checkpoint, load_dataset

    model, _ = load_checkpoint(checkpoint)
    samples = load_dataset(data_dir)
    if not 0 <= index < len(samples):
        _fail(EXIT_DATA, f"index {index} out of range (0..{len(samples) - 1})")
    cands = generate_candidates(model, [samples[index]], seeds=[seed], num_steps=num_steps, eta=eta)
    _save_png(cands[0][0], out_path)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--checkpoint", "checkpoints", type=(str, click.Path(path_type=Path)), multiple=True, required=True, help="METHOD PATH pair (repeatable).")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True, help="Test split dataset directory.")
@click.option("--embedder", "embedder_path", type=click.Path(path_type=Path), required=True, help="Frozen evaluator embedder checkpoint.")
@click.option("--k", default=9, show_default=True, help="Candidates per sample (seeds 0..k-1).")
@click.option("--num-steps", default=None, type=int, help="Reverse-process steps (default: full schedule).")
@click.option("--eta", default=0.0, show_default=True, help="Reverse-process stochasticity (0 = deterministic, 1 = ancestral).")
@click.option("--limit", default=0, show_default=True, help="Evaluate only the first N samples (0 = all).")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True, help="Evaluation output directory.")
@handle_errors
def evaluate(checkpoints, data_dir, embedder_path, k, num_steps, eta, limit, out_dir):
    """Score one or more checkpoints on a test split; writes the report,
    a contact sheet per method, and every generated candidate."""
    from .evalsuite.embedder import load_embedder
    from .evalsuite.pipeline import contact_sheet, generate_candidates, score_candidates
    from .evalsuite.report import EvalReport, render_report
    from .training import load_checkpoint, load_dataset

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    embedder = load_embedder(embedder_path)
    samples = load_dataset(data_dir)
    if limit:
        samples = samples[:limit]
    if not samples:
        _fail(EXIT_DATA, f"no samples under {data_dir}")

    report = EvalReport(meta={"embedder": str(embedder_path), "data": str(data_dir)})
    for method, ckpt in checkpoints:
        model, _ = load_checkpoint(ckpt)
        click.echo(f"[{method}] generating {len(samples)} samples x {k} seeds")
        cands = generate_candidates(
            model, samples, seeds=range(k), num_steps=num_steps, eta=eta, log=click.echo
        )
        method_dir = out_dir / "methods" / method
        method_dir.mkdir(parents=True, exist_ok=True)
        for s, imgs in zip(samples, cands):
            for ki, img in enumerate(imgs):
                _save_png(img, method_dir / f"{s.record.sample_id}_{ki}.png")
        report.merge(score_candidates(samples, cands, embedder, method))
        _save_png(contact_sheet(samples, cands), out_dir / f"contact_sheet_{method}.png")
    report.meta.update({"k": k, "n": len(samples)})
    report.save(out_dir / "report.json")
    text = render_report(report)
    _atomic_write_bytes(out_dir / "report.txt", text.encode())
    click.echo(text)


@main.command()
@click.option("--eval-dir", type=click.Path(path_type=Path), required=True, help="Directory produced by evaluate.")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True, help="The test split that was evaluated.")
@click.option("--rater", required=True, help="Rater id recorded with each judgment.")
@click.option("--seed", default=0, show_default=True, help="Blinding shuffle seed (logged).")
@click.option("--limit", default=0, show_default=True, help="Rate only the first N samples (0 = all).")
@handle_errors
def rate(eval_dir, data_dir, rater, seed, limit):
    """Interactive blinded plausibility rating over evaluated methods.

    For each sample the methods' first candidates are shown in a
    shuffled, unlabeled order; the rater flags every plausible image
    and then picks a best one among those flagged.
    """
    from PIL import Image

    from .evalsuite.metrics import JudgmentRecord
    from .training import load_dataset

    eval_dir = Path(eval_dir)
    methods_root = eval_dir / "methods"
    if not methods_root.is_dir():
        _fail(EXIT_DATA, f"no methods/ directory under {eval_dir}")
    methods = sorted(p.name for p in methods_root.iterdir() if p.is_dir())
    if not methods:
        _fail(EXIT_DATA, f"no method directories under {methods_root}")
    samples = load_dataset(data_dir)
    if limit:
        samples = samples[:limit]

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x2A7E]))
    click.echo(f"rating {len(samples)} samples over {len(methods)} methods (shuffle seed {seed})")
    out_path = eval_dir / "judgments.jsonl"
    records = []
    for s in samples:
        order = [methods[i] for i in rng.permutation(len(methods))]
        click.echo(f"\nsample {s.record.sample_id}: {s.record.question}")
        shown = []
        for label, method in enumerate(order, start=1):
            img_path = methods_root / method / f"{s.record.sample_id}_0.png"
            if not img_path.exists():
                _fail(EXIT_DATA, f"missing candidate image {img_path}")
            shown.append((label, method, img_path))
            click.echo(f"  candidate {label}: {img_path}")
        flags = click.prompt(
            "plausible candidates (comma-separated numbers, empty for none)",
            default="",
            show_default=False,
        )
        try:
            picked = sorted({int(x) for x in flags.split(",") if x.strip()})
        except ValueError:
            picked = None
        while picked is None or any(p < 1 or p > len(order) for p in picked):
            flags = click.prompt("invalid; enter numbers in range, comma-separated")
            try:
                picked = sorted({int(x) for x in flags.split(",") if x.strip()})
            except ValueError:
                picked = None
        plausible = tuple(order[p - 1] for p in picked)
        best = None
        if plausible:
            while True:
                pick = click.prompt(f"best candidate among {picked}", type=int)
                if pick in picked:
                    best = order[pick - 1]
                    break
                click.echo("best pick must be one of the plausible candidates")
        records.append(
            JudgmentRecord(
                rater_id=rater, sample_id=s.record.sample_id, plausible=plausible, best=best
            )
        )
    with open(out_path, "a") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    click.echo(f"appended {len(records)} judgments to {out_path}")


@main.command()
@click.option("--results", "results_path", type=click.Path(path_type=Path), required=True, help="report.json from evaluate.")
@click.option("--judgments", "judgments_path", type=click.Path(path_type=Path), default=None, help="judgments.jsonl from rate.")
@handle_errors
def report(results_path, judgments_path):
    """Render evaluation results (and optional human judgments) as tables."""
    from .evalsuite.metrics import JudgmentRecord, tally_human
    from .evalsuite.report import TOTAL, EvalReport, render_report

    rep = EvalReport.load(results_path)
    if judgments_path is not None:
        lines = Path(judgments_path).read_text().splitlines()
        records = [JudgmentRecord.from_dict(json.loads(ln)) for ln in lines if ln.strip()]
        if records:
            for method, vals in tally_human(records, rep.methods()).items():
                rep.set_value(method, TOTAL, "acc", vals["acc"])
                rep.set_value(method, TOTAL, "chosen_rate", vals["chosen_rate"])
        else:
            click.echo("no judgment records found; Acc/ChosenRate omitted")
    click.echo(render_report(rep), nl=False)


@main.command("train-embedder")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True, help="Embedder checkpoint output path.")
@click.option("--seed", default=0, show_default=True)
@click.option("--steps", default=900, show_default=True)
@click.option("--canvas-size", default=64, show_default=True)
@handle_errors
def train_embedder_cmd(out_path, seed, steps, canvas_size):
    """Train and save the frozen evaluator embedder."""
    from .evalsuite.embedder import probe_accuracy, save_embedder, train_embedder

    model = train_embedder(seed=seed, steps=steps, canvas_size=canvas_size, log=click.echo)
    acc = probe_accuracy(model, canvas_size=canvas_size)
    save_embedder(model, out_path)
    click.echo("probe accuracy: " + ", ".join(f"{k}={v:.3f}" for k, v in acc.items()))
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
