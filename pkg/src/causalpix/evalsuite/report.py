"""Evaluation report container and text-table rendering.

A report maps method -> category -> metric values, with "total" as the
whole-test-set column.  Rendering follows the conventional layout: one
table per metric, methods as rows, columns TT (total test set) then the
five sample categories SV / ME / FE / EV / EMV.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..world.state import CATEGORY_ORDER, Category

TOTAL = "total"

#: Column header per category, in rendering order.
COLUMNS: tuple[tuple[str, str], ...] = (
    (TOTAL, "TT"),
    (Category.SCENERY_VARIATION.value, "SV"),
    (Category.MORE_ENTITIES.value, "ME"),
    (Category.FEWER_ENTITIES.value, "FE"),
    (Category.ENTITIES_VARIATION.value, "EV"),
    (Category.EMOTION_VARIATION.value, "EMV"),
)

#: Metric key -> (display name, higher_is_better).
METRICS: tuple[tuple[str, str, bool], ...] = (
    ("sim_avg", "Sim_Avg", True),
    ("sim_best_at_k", "Sim_Best@K", True),
    ("auc_avg", "AUC_Avg", True),
    ("auc_best_at_k", "AUC_Best@K", True),
    ("fid", "FID", False),
    ("state_match_rate", "StateMatch", True),
    ("acc", "Acc", True),
    ("chosen_rate", "ChosenRate", True),
)


class MalformedReport(ValueError):
    pass


@dataclass
class EvalReport:
    """method -> category -> metric -> value, plus run metadata."""

    results: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def set_value(self, method: str, category: str, metric: str, value: float) -> None:
        self.results.setdefault(method, {}).setdefault(category, {})[metric] = float(value)

    def get_value(self, method: str, category: str, metric: str) -> float | None:
        return self.results.get(method, {}).get(category, {}).get(metric)

    def methods(self) -> list[str]:
        return list(self.results)

    def to_dict(self) -> dict:
        return {"format": "causalpix-eval-report-v1", "meta": self.meta, "results": self.results}

    @staticmethod
    def from_dict(d: dict) -> "EvalReport":
        if d.get("format") != "causalpix-eval-report-v1":
            raise MalformedReport(f"unknown report format {d.get('format')!r}")
        return EvalReport(results=d["results"], meta=d.get("meta", {}))

    def save(self, path: Path) -> None:
        tmp = Path(path).with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        tmp.replace(path)

    @staticmethod
    def load(path: Path) -> "EvalReport":
        try:
            return EvalReport.from_dict(json.loads(Path(path).read_text()))
        except (json.JSONDecodeError, KeyError) as exc:
            raise MalformedReport(f"{path}: unreadable report") from exc

    def merge(self, other: "EvalReport") -> None:
        """Fold another report's values in (later values win)."""
        for method, cats in other.results.items():
            for cat, metrics in cats.items():
                for metric, value in metrics.items():
                    self.set_value(method, cat, metric, value)


def _fmt(value: float | None) -> str:
    return f"{value:.4f}" if value is not None else "-"


def render_report(report: EvalReport) -> str:
    """Plain-text tables, one per metric with at least one value."""
    lines: list[str] = []
    methods = report.methods()
    name_w = max([len(m) for m in methods] + [8])
    for key, display, higher in METRICS:
        if not any(
            report.get_value(m, cat, key) is not None
            for m in methods
            for cat, _ in COLUMNS
        ):
            continue
        arrow = "↑" if higher else "↓"
        lines.append(f"{display} {arrow}")
        header = " ".join(f"{h:>8}" for _, h in COLUMNS)
        lines.append(f"{'method':<{name_w}} {header}")
        for m in methods:
            cells = " ".join(f"{_fmt(report.get_value(m, cat, key)):>8}" for cat, _ in COLUMNS)
            lines.append(f"{m:<{name_w}} {cells}")
        lines.append("")
    if report.meta:
        lines.append("metadata:")
        for k in sorted(report.meta):
            lines.append(f"  {k}: {report.meta[k]}")
    return "\n".join(lines).rstrip() + "\n"
