"""Command line: generate -> preprocess -> train -> represent -> evaluate -> report.

Every command writes under an output root (``--root``, default from the
``S2SREP_ROOT`` environment variable, else ``./s2srep-run``) and appends its
stage to ``<root>/manifest.json``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import uuid
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config, render_defaults
from .eval import (
    PROBE_ROLES, EvalReport, ReplicateProber, RepresentationDump, audit_report, audit_splits,
    represent,
)
from .models import MODEL_KINDS, RankError
from .numerics import NonFiniteError, ShapeError
from .preprocess import (
    GridMatrix, InputError, build_grids, filter_cohort, fit_variable_specs, make_splits,
    read_grid, read_raw, read_specs, read_splits, scale, select_variables, write_grid, write_raw,
    write_specs, write_splits,
)
from .synthdata import generate
from .train import Checkpoint, grid_search, make_training_windows

ROOT_ENV = "S2SREP_ROOT"
DEFAULT_ROOT = "s2srep-run"
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
STAGES = ("generate", "preprocess", "train", "represent", "evaluate", "report")

log = logging.getLogger("s2srep")


class ValidationError(ValueError):
    """Bad arguments or inputs detected before anything is written."""


# -- manifest ----------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    run_id: str
    config_digest: str
    config_text: str
    seed: int
    stages: list[dict] = field(default_factory=list)

    @classmethod
    def open(cls, root: Path, cfg: RunConfig) -> RunManifest:
        path = root / "manifest.json"
        if not path.exists():
            return cls(uuid.uuid4().hex[:12], cfg.digest, cfg.text, cfg.seed)
        data = json.loads(path.read_text())
        if data["config_digest"] != cfg.digest:
            raise ValidationError(
                f"{path} was started with config digest {data['config_digest'][:12]}, "
                f"this invocation has {cfg.digest[:12]}; use a fresh --root or the same config")
        return cls(**data)

    def record(self, stage: str, outputs: list, started: str, **details) -> None:
        self.stages.append({"stage": stage, "started": started, "finished": _now(),
                            "outputs": [str(p) for p in outputs], **details})

    def save(self, root: Path) -> Path:
        root.mkdir(parents=True, exist_ok=True)
        path = root / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=1) + "\n")
        return path


# -- layout helpers ----------------------------------------------------------

def _rep_dir(base: Path, r: int) -> Path:
    return base / f"rep{r}"


def _model_name(kind: str, m: int) -> str:
    return f"{kind}_m{m}"


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ValidationError(f"missing {what}: {path}")
    return path


def _replicates(arg: str, n: int) -> list[int]:
    if arg == "all":
        return list(range(n))
    try:
        reps = sorted({int(x) for x in arg.split(",")})
    except ValueError:
        raise ValidationError(f"--replicate takes 'all' or comma-separated integers, got {arg!r}")
    if not reps or reps[0] < 0 or reps[-1] >= n:
        raise ValidationError(f"replicates {reps} outside 0..{n - 1}")
    return reps


def _read_stays(data: Path) -> dict[str, tuple[float, str]]:
    path = _require(data / "cohort.tsv", "cohort table (run preprocess first)")
    with open(path, newline="") as fh:
        return {row["patient_id"]: (float(row["stay_hours"]), row["outcome"])
                for row in csv.DictReader(fh, delimiter="\t")}


def load_replicate_grids(data: Path, r: int) -> dict[str, GridMatrix]:
    """Scaled grids for replicate ``r`` (stored unscaled next to their specs)."""
    rep = _require(_rep_dir(data, r), f"replicate {r} data")
    specs = read_specs(_require(rep / "specs.tsv", "variable specs"))
    return {g.patient_id: scale(g, specs)
            for g in (read_grid(p) for p in sorted((rep / "grids").glob("*.grid.tsv")))}


# -- dumps -------------------------------------------------------------------

def write_dump(path: Path, dumps: dict[str, RepresentationDump], header: dict) -> None:
    m = next((d.vectors.shape[1] for d in dumps.values()), 0)
    lines = ["#" + "\t".join(f"{k}={v}" for k, v in header.items()),
             "\t".join(["patient_id", "t"] + [f"e{j}" for j in range(m)])]
    for pid in sorted(dumps):
        d = dumps[pid]
        for t, vec in zip(d.end_times, d.vectors):
            lines.append("\t".join([pid, str(int(t))] + [repr(float(v)) for v in vec]))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_dump(path: Path) -> dict[str, RepresentationDump]:
    rows: dict[str, tuple[list, list]] = {}
    with open(path) as fh:
        fh.readline()
        fh.readline()
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            ts, vs = rows.setdefault(parts[0], ([], []))
            ts.append(int(parts[1]))
            vs.append([float(x) for x in parts[2:]])
    return {pid: RepresentationDump(pid, np.asarray(ts), np.asarray(vs, dtype=np.float64))
            for pid, (ts, vs) in rows.items()}


# -- commands ----------------------------------------------------------------

def cmd_generate(args, cfg: RunConfig, manifest: RunManifest, root: Path) -> list[Path]:
    out = Path(args.out) if args.out else root / "raw"
    records, latents, table = generate(cfg.generate)
    write_raw(out, records, table)
    lat_path = out / "latents.npz"
    np.savez(lat_path, **latents)
    (out / "generator.json").write_text(json.dumps(cfg.generate.to_dict(), indent=1,
                                                   sort_keys=True) + "\n")
    log.info("generated %d patients into %s", len(records), out)
    return [out / "observations.csv", out / "patients.csv", out / "variables.csv", lat_path]


def cmd_preprocess(args, cfg: RunConfig, manifest: RunManifest, root: Path) -> list[Path]:
    raw = Path(args.raw) if args.raw else root / "raw"
    out = Path(args.out) if args.out else root / "data"
    records, table = read_raw(_require(raw, "raw directory"))
    cohort = filter_cohort(records)
    if len(cohort) < 10:
        raise ValidationError(f"cohort filter kept {len(cohort)} patients; at least 10 needed")
    table = select_variables(cohort, table, cfg.preprocess.min_fraction)
    if not table:
        raise ValidationError(f"no variable is recorded for {cfg.preprocess.min_fraction:.0%} "
                              "of the cohort")
    splits = make_splits([r.patient_id for r in cohort], cfg.seed, cfg.preprocess.replicates)
    audit_splits(splits, [r.patient_id for r in cohort])
    # everything validated; now write
    out.mkdir(parents=True, exist_ok=True)
    write_splits(out / "splits.json", splits)
    with open(out / "cohort.tsv", "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["patient_id", "stay_hours", "outcome"])
        for r in cohort:
            w.writerow([r.patient_id, repr(float(r.stay_hours)), r.outcome])
    outputs = [out / "splits.json", out / "cohort.tsv"]
    for s in splits:
        rep = _rep_dir(out, s.replicate)
        train_ids = set(s.train)
        specs = fit_variable_specs([r for r in cohort if r.patient_id in train_ids], table)
        write_specs(rep / "specs.tsv", specs)
        for grid in build_grids(cohort, specs).values():
            write_grid(rep / "grids", grid)
        outputs.append(rep)
    log.info("cohort %d of %d patients, %d replicates -> %s", len(cohort), len(records),
             len(splits), out)
    return outputs


def _train_one(data: Path, models: Path, r: int, kind: str, cfg: RunConfig):
    exp = cfg.experiment
    splits = read_splits(data / "splits.json")
    split = splits[r]
    grids = load_replicate_grids(data, r)
    target = "future" if kind in ("s2s_f", "s2s_f_a") else "past"
    train_w = make_training_windows(grids, split.train, exp.T, target)
    val_w = make_training_windows(grids, split.validation, exp.T, target)
    best, points = grid_search(train_w, val_w, exp.train_config(kind))
    rep = _rep_dir(models, r)
    name = _model_name(kind, exp.m)
    ckpt_path = best.checkpoint.save(rep / f"{name}.npz")
    log_path = rep / f"{name}.log.tsv"
    log_path.write_text(best.log.to_tsv())
    grid_path = rep / f"{name}.grid.tsv"
    grid_path.write_text("lr\tactivation\tbest_val_loss\n" + "".join(
        f"{p.lr!r}\t{p.activation}\t{p.best_val_loss!r}\n" for p in points))
    return [ckpt_path, log_path, grid_path]


def _train_job(job):
    return _train_one(*job)


def cmd_train(args, cfg: RunConfig, manifest: RunManifest, root: Path) -> list[Path]:
    data = Path(args.data) if args.data else root / "data"
    models = Path(args.out) if args.out else root / "models"
    if args.m is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, m=args.m))
    splits = read_splits(_require(data / "splits.json", "splits (run preprocess first)"))
    reps = _replicates(args.replicate, len(splits))
    for r in reps:
        _require(_rep_dir(data, r) / "specs.tsv", f"replicate {r} specs")
    jobs = [(data, models, r, args.kind, cfg) for r in reps]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_job, jobs))
    else:
        results = [_train_one(*j) for j in jobs]
    return [p for res in results for p in res]


def cmd_represent(args, cfg: RunConfig, manifest: RunManifest, root: Path) -> list[Path]:
    data = Path(args.data) if args.data else root / "data"
    out = Path(args.out) if args.out else root / "reps"
    ckpt = Checkpoint.load(_require(Path(args.checkpoint), "checkpoint"))
    model = ckpt.model()
    splits = read_splits(_require(data / "splits.json", "splits"))
    r = args.replicate
    if not 0 <= r < len(splits):
        raise ValidationError(f"replicate {r} outside 0..{len(splits) - 1}")
    grids = load_replicate_grids(data, r)
    ids = splits[r].role(args.role)
    d = next(iter(grids.values())).values.shape[1]
    if d != model.d:
        raise ValidationError(f"checkpoint expects d={model.d}, data has d={d}")
    dumps = {pid: represent(model, ckpt.params, grids[pid], model.T) for pid in ids}
    path = _rep_dir(out, r) / f"{_model_name(ckpt.kind, model.m)}.{args.role}.tsv"
    write_dump(path, dumps, {"kind": ckpt.kind, "m": model.m, "T": model.T, "role": args.role,
                             "replicate": r, "checkpoint": Path(args.checkpoint).name})
    return [path]


def _percent_list(arg: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) / 100.0 for x in arg.split(","))
    except ValueError:
        raise ValidationError(f"--fractions takes comma-separated percentages, got {arg!r}")
    if any(not 0 < v <= 1 for v in vals):
        raise ValidationError("--fractions must lie in (0, 100]")
    return vals if 1.0 in vals else vals + (1.0,)


def _evaluate_one(data: Path, reps_dir: Path, models_dir: Path, r: int, cfg: RunConfig,
                  model_names: list[tuple[str, str]], dims: tuple[int, ...], dim_task: str):
    exp = cfg.experiment
    split = read_splits(data / "splits.json")[r]
    grids = load_replicate_grids(data, r)
    stays = _read_stays(data)
    prober = ReplicateProber(grids, stays, split, exp)
    cells = []
    for approach, name in model_names:
        dumps = {role: read_dump(_rep_dir(reps_dir, r) / f"{name}.{role}.tsv")
                 for role in PROBE_ROLES}
        cells += prober.representation_cells(approach, dumps)
    cells += prober.raw_cells()
    if dims:
        sweep = ReplicateProber(grids, stays, split,
                                replace(exp, tasks=(dim_task,), fractions=(1.0,)))
        for m in dims:
            name = _model_name("s2s_f_a", m)
            dumps = {}
            for role in PROBE_ROLES:
                path = _rep_dir(reps_dir, r) / f"{name}.{role}.tsv"
                if path.exists():
                    dumps[role] = read_dump(path)
                else:
                    ckpt = Checkpoint.load(_rep_dir(models_dir, r) / f"{name}.npz")
                    model = ckpt.model()
                    dumps[role] = {pid: represent(model, ckpt.params, grids[pid], model.T)
                                   for pid in split.role(role)}
            cells += [replace(c, approach=f"s2s_f_a@m={m}")
                      for c in sweep.classify(f"s2s_f_a@m={m}", dumps, 1, (1.0,))]
    return cells


def _evaluate_job(job):
    return _evaluate_one(*job)


def cmd_evaluate(args, cfg: RunConfig, manifest: RunManifest, root: Path) -> list[Path]:
    data = Path(args.data) if args.data else root / "data"
    reps_dir = Path(args.reps) if args.reps else root / "reps"
    models_dir = root / "models"
    out = Path(args.out) if args.out else root / "eval"
    exp = cfg.experiment
    if args.fractions:
        exp = replace(exp, fractions=_percent_list(args.fractions))
    if args.tasks:
        exp = replace(exp, tasks=tuple(t.strip() for t in args.tasks.split(",")))
    try:
        exp = replace(exp)   # re-run field validation
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    cfg = replace(cfg, experiment=exp)
    splits = read_splits(_require(data / "splits.json", "splits"))
    dims = tuple(int(x) for x in args.dims.split(",")) if args.dims else ()
    model_names = []
    for kind in exp.models:
        name = _model_name(kind, exp.m)
        missing = [role for role in PROBE_ROLES for s in splits
                   if not (_rep_dir(reps_dir, s.replicate) / f"{name}.{role}.tsv").exists()]
        if missing and not args.skip_missing:
            raise ValidationError(f"no representation dumps for {name} ({len(missing)} missing); "
                                  "run represent first or pass --skip-missing")
        if not missing:
            model_names.append((kind, name))
    for m in dims:
        for s in splits:
            name = _model_name("s2s_f_a", m)
            if not (_rep_dir(models_dir, s.replicate) / f"{name}.npz").exists() and not all(
                    (_rep_dir(reps_dir, s.replicate) / f"{name}.{role}.tsv").exists()
                    for role in PROBE_ROLES):
                raise ValidationError(f"--dims {m}: missing checkpoint "
                                      f"{_rep_dir(models_dir, s.replicate) / name}.npz")
    dim_task = exp.tasks[-1]
    jobs = [(data, reps_dir, models_dir, s.replicate, cfg, model_names, dims, dim_task)
            for s in splits]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            per_rep = list(pool.map(_evaluate_job, jobs))
    else:
        per_rep = [_evaluate_one(*j) for j in jobs]
    report = EvalReport([c for cells in per_rep for c in cells], n_replicates=len(splits))
    report.validate()
    audit_report(report.cells, splits)
    return list(report.write(out).values())


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    fmt = lambda r: "| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([fmt(rows[0]), sep] + [fmt(r) for r in rows[1:]])


def render_report(eval_dir: Path) -> str:
    with open(_require(eval_dir / "report.tsv", "evaluation report"), newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    parts = []
    signal = [r for r in rows if r["metric"].startswith("mse")]
    if signal:
        approaches = sorted({r["approach"] for r in signal})
        metrics = sorted({r["metric"] for r in signal})
        body = [["representation"] + metrics]
        for a in approaches:
            cell = {r["metric"]: r["cell"] for r in signal if r["approach"] == a}
            body.append([a] + [cell.get(m, "-") for m in metrics])
        parts.append("## Past / future signal probes (test2 MSE)\n\n" + _table(body))
    clf = [r for r in rows if r["metric"] in ("auroc", "auprc") and float(r["fraction"]) == 1.0]
    if clf:
        cols = sorted({(r["task"], r["metric"]) for r in clf})
        body = [["approach"] + [f"{t} {m}" for t, m in cols]]
        for a in sorted({r["approach"] for r in clf}):
            cell = {(r["task"], r["metric"]): r["cell"] for r in clf if r["approach"] == a}
            body.append([a] + [cell.get(c, "-") for c in cols])
        parts.append("## 24h outcome classification (test2, all labels)\n\n" + _table(body))
    curve = [r for r in rows if r["metric"] == "auprc" and float(r["fraction"]) < 1.0]
    if curve:
        fracs = sorted({float(r["fraction"]) for r in rows if r["metric"] == "auprc"})
        for task in sorted({r["task"] for r in curve}):
            body = [["approach"] + [f"{100 * f:g}%" for f in fracs]]
            sub = [r for r in rows if r["metric"] == "auprc" and r["task"] == task]
            for a in sorted({r["approach"] for r in sub}):
                cell = {float(r["fraction"]): r["cell"] for r in sub if r["approach"] == a}
                body.append([a] + [cell.get(f, "-") for f in fracs])
            parts.append(f"## Limited labels, {task} AUPRC\n\n" + _table(body))
    return "\n\n".join(parts) + "\n"


def cmd_report(args, cfg: RunConfig, manifest: RunManifest, root: Path) -> list[Path]:
    eval_dir = Path(args.eval) if args.eval else root / "eval"
    text = render_report(eval_dir)
    out = Path(args.out) if args.out else root / "report.md"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    sys.stdout.write(text)
    return [out]


COMMANDS = {"generate": cmd_generate, "preprocess": cmd_preprocess, "train": cmd_train,
            "represent": cmd_represent, "evaluate": cmd_evaluate, "report": cmd_report}


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--root", help=f"output root (default ${ROOT_ENV} or ./{DEFAULT_ROOT})")
    common.add_argument("--config", help="INI config file; omitted keys take their defaults")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="s2srep", description=__doc__.splitlines()[0])
    ap.add_argument("--print-defaults", action="store_true",
                    help="print every config key with its default and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("generate", parents=[common], help="write a synthetic raw cohort")
    p.add_argument("--out", help="raw output directory (default <root>/raw)")

    p = sub.add_parser("preprocess", parents=[common],
                       help="cohort filter, splits, imputed grids and variable specs")
    p.add_argument("--raw", help="raw input directory (default <root>/raw)")
    p.add_argument("--out", help="data directory (default <root>/data)")

    p = sub.add_parser("train", parents=[common], help="fit one representation model kind")
    p.add_argument("--kind", required=True, choices=MODEL_KINDS)
    p.add_argument("--replicate", default="all", help="'all' or comma-separated indices")
    p.add_argument("--m", type=int, help="override the representation size")
    p.add_argument("--data", help="data directory (default <root>/data)")
    p.add_argument("--out", help="checkpoint directory (default <root>/models)")

    p = sub.add_parser("represent", parents=[common], help="dump e_t for one split role")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--replicate", type=int, required=True)
    p.add_argument("--role", required=True, choices=("train",) + PROBE_ROLES)
    p.add_argument("--data", help="data directory (default <root>/data)")
    p.add_argument("--out", help="dump directory (default <root>/reps)")

    p = sub.add_parser("evaluate", parents=[common], help="probes and classifiers on test2")
    p.add_argument("--data")
    p.add_argument("--reps", help="dump directory (default <root>/reps)")
    p.add_argument("--out", help="report directory (default <root>/eval)")
    p.add_argument("--tasks", help="comma-separated: discharge, mortality")
    p.add_argument("--fractions", help="label percentages for the limited-label curve, "
                                       "e.g. 1,2,5,10,25,50,100")
    p.add_argument("--dims", help="S2S-F-A sizes for the dimension sweep, e.g. 2,50,94")
    p.add_argument("--skip-missing", action="store_true",
                   help="evaluate only the model kinds whose dumps exist")

    p = sub.add_parser("report", parents=[common], help="render report tables as markdown")
    p.add_argument("--eval", help="evaluation directory (default <root>/eval)")
    p.add_argument("--out", help="markdown output (default <root>/report.md)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(render_defaults())
        return EXIT_OK
    if not args.command:
        ap.print_help(sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    root = Path(args.root or os.environ.get(ROOT_ENV) or DEFAULT_ROOT)
    try:
        if args.jobs < 1:
            raise ValidationError("--jobs must be at least 1")
        cfg = load_config(args.config)
        manifest = RunManifest.open(root, cfg)
        started = _now()
        t0 = time.perf_counter()
        outputs = COMMANDS[args.command](args, cfg, manifest, root)
        manifest.record(args.command, outputs, started,
                        seconds=round(time.perf_counter() - t0, 3),
                        argv=sys.argv[1:] if argv is None else list(argv))
        manifest.save(root)
    except (NonFiniteError, RankError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (ValidationError, ConfigError, InputError, ShapeError, ValueError, KeyError,
            FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
