"""Evaluation cells, replicate aggregation and report files."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

METRICS = ("mse_reconstruction", "mse_prediction", "auroc", "auprc")


@dataclass(frozen=True)
class Cell:
    approach: str          # representation model kind, or raw_lstm1 / raw_lstm3
    task: str              # past / future for signal probes, discharge / mortality otherwise
    metric: str
    fraction: float
    replicate: int
    value: float           # nan when the cell is unavailable
    scored_role: str = "test2"
    scored_ids: tuple[str, ...] = ()
    note: str = ""

    @property
    def available(self) -> bool:
        return math.isfinite(self.value)

    def key(self) -> tuple:
        return (self.approach, self.task, self.metric, self.fraction)


@dataclass
class Aggregate:
    approach: str
    task: str
    metric: str
    fraction: float
    values: list[float]

    @property
    def available(self) -> list[float]:
        return [v for v in self.values if math.isfinite(v)]

    @property
    def mean(self) -> float:
        a = self.available
        return float(np.mean(a)) if a else float("nan")

    @property
    def sd(self) -> float:
        a = self.available
        return float(np.std(a, ddof=1)) if len(a) > 1 else float("nan")

    @property
    def text(self) -> str:
        """``mean ± sd``; a lone value is shown bare and no values as ``n/a``."""
        a = self.available
        if not a:
            return "n/a"
        return f"{self.mean:.4f} ± {self.sd:.4f}" if len(a) > 1 else f"{self.mean:.4f}"


@dataclass
class EvalReport:
    cells: list[Cell] = field(default_factory=list)
    n_replicates: int = 5

    def extend(self, cells) -> None:
        self.cells.extend(cells)

    def validate(self) -> None:
        """Metric ranges, and exactly one cell per replicate for every key."""
        counts = defaultdict(list)
        for c in self.cells:
            if c.metric not in METRICS:
                raise ValueError(f"unknown metric {c.metric!r}")
            if c.available:
                if c.metric.startswith("mse") and c.value < 0:
                    raise ValueError(f"negative MSE in {c}")
                if c.metric in ("auroc", "auprc") and not 0.0 <= c.value <= 1.0:
                    raise ValueError(f"{c.metric} outside [0, 1] in {c}")
            counts[c.key()].append(c.replicate)
        for key, reps in counts.items():
            if sorted(reps) != list(range(self.n_replicates)):
                raise ValueError(f"cell {key} has replicates {sorted(reps)}, "
                                 f"expected 0..{self.n_replicates - 1}")

    def aggregates(self) -> list[Aggregate]:
        grouped: dict[tuple, list[Cell]] = defaultdict(list)
        for c in self.cells:
            grouped[c.key()].append(c)
        out = []
        for key in sorted(grouped):
            cells = sorted(grouped[key], key=lambda c: c.replicate)
            out.append(Aggregate(*key, [c.value for c in cells]))
        return out

    def lookup(self, approach, task, metric, fraction=1.0) -> list[Cell]:
        return sorted((c for c in self.cells
                       if c.key() == (approach, task, metric, fraction)),
                      key=lambda c: c.replicate)

    # -- files -----------------------------------------------------------

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"cells": out / "cells.tsv", "report": out / "report.tsv",
                 "summary": out / "summary.json"}
        with open(paths["cells"], "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["approach", "task", "metric", "fraction", "replicate", "value",
                        "scored_role", "n_scored_patients", "note"])
            for c in sorted(self.cells, key=lambda c: (c.key(), c.replicate)):
                w.writerow([c.approach, c.task, c.metric, repr(c.fraction), c.replicate,
                            repr(c.value), c.scored_role, len(c.scored_ids), c.note])
        aggs = self.aggregates()
        with open(paths["report"], "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["approach", "task", "metric", "fraction", "mean", "sd", "n_available",
                        "cell"])
            for a in aggs:
                w.writerow([a.approach, a.task, a.metric, repr(a.fraction), repr(a.mean),
                            repr(a.sd), len(a.available), a.text])
        summary = [{**{k: v for k, v in asdict(a).items()}, "mean": a.mean, "sd": a.sd}
                   for a in aggs]
        paths["summary"].write_text(json.dumps(summary, indent=1, allow_nan=True) + "\n")
        paths.update(self.write_curves(out / "curves"))
        return paths

    def write_curves(self, curve_dir) -> dict[str, Path]:
        """One file per (task, metric): fraction rows, ``approach_mean``/``approach_sd`` columns."""
        aggs = [a for a in self.aggregates() if a.metric in ("auroc", "auprc")]
        fractions_by = defaultdict(set)
        for a in aggs:
            fractions_by[(a.task, a.metric)].add(a.fraction)
        paths = {}
        for (task, metric), fracs in sorted(fractions_by.items()):
            if len(fracs) < 2:
                continue
            curve_dir = Path(curve_dir)
            curve_dir.mkdir(parents=True, exist_ok=True)
            approaches = sorted({a.approach for a in aggs if (a.task, a.metric) == (task, metric)})
            table = {(a.approach, a.fraction): a for a in aggs if (a.task, a.metric) == (task, metric)}
            path = curve_dir / f"{task}_{metric}.tsv"
            lines = ["fraction\t" + "\t".join(f"{ap}_mean\t{ap}_sd" for ap in approaches)]
            for f in sorted(fracs):
                row = [repr(f)]
                for ap in approaches:
                    a = table.get((ap, f))
                    row += [repr(a.mean), repr(a.sd)] if a else ["nan", "nan"]
                lines.append("\t".join(row))
            path.write_text("\n".join(lines) + "\n")
            paths[f"curve:{task}_{metric}"] = path
        return paths


def read_cells(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))
