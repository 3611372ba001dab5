"""Domain records for the preprocessing pipeline and their on-disk formats.

Raw input (all comma-separated with a header row):

``observations.csv``  patient_id,variable_id,time,value
                      time is decimal hours since admission
``patients.csv``      patient_id,stay_hours,outcome,stay_count
                      outcome is ``died`` or ``discharged_stable``
``variables.csv``     variable_id,class
                      class is ``periodic``, ``aperiodic`` or ``lab``
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OUTCOMES = ("died", "discharged_stable")
HORIZONS = {"periodic": 1.0, "aperiodic": 5.0, "lab": 24.0}
PROVENANCE = ("observed", "forward-filled", "history-mean", "population-median")


class InputError(ValueError):
    """Malformed raw input; the message names the file and line."""


@dataclass
class PatientRecord:
    patient_id: str
    stay_hours: float
    outcome: str
    stay_count: int = 1
    # variable id -> (times, values), times sorted ascending
    observations: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return int(math.ceil(self.stay_hours - 1e-9))

    def n_observations(self) -> int:
        return sum(len(t) for t, _ in self.observations.values())


@dataclass
class VariableSpec:
    variable_id: str
    var_class: str
    p5: float = float("nan")
    p95: float = float("nan")
    median: float = float("nan")
    mean: float = 0.0
    std: float = 1.0
    constant: bool = False

    @property
    def horizon(self) -> float:
        return HORIZONS[self.var_class]


@dataclass
class GridMatrix:
    patient_id: str
    values: np.ndarray          # (L, d)
    mask: np.ndarray            # (L, d) int8 provenance codes, see PROVENANCE
    variables: tuple[str, ...]

    @property
    def L(self) -> int:
        return self.values.shape[0]


@dataclass
class SplitSpec:
    replicate: int
    train: list[str]
    validation: list[str]
    test1: list[str]
    test2: list[str]

    ROLES = ("train", "validation", "test1", "test2")

    def role(self, name: str) -> list[str]:
        if name not in self.ROLES:
            raise KeyError(f"unknown split role {name!r}")
        return getattr(self, name)

    def role_of(self) -> dict[str, str]:
        return {pid: r for r in self.ROLES for pid in self.role(r)}


# -- reading -----------------------------------------------------------------

def _rows(path: Path, columns: tuple[str, ...]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != columns:
            raise InputError(f"{path}:1: expected header {','.join(columns)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise InputError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            yield lineno, row


def read_variable_table(path) -> dict[str, str]:
    path = Path(path)
    table = {}
    for lineno, (vid, cls) in _rows(path, ("variable_id", "class")):
        if cls not in HORIZONS:
            raise InputError(f"{path}:{lineno}: unknown variable class {cls!r}")
        table[vid] = cls
    return table


def read_raw(raw_dir) -> tuple[list[PatientRecord], dict[str, str]]:
    """Load the three raw files; every problem is reported with its line number."""
    raw_dir = Path(raw_dir)
    table = read_variable_table(raw_dir / "variables.csv")
    records: dict[str, PatientRecord] = {}
    path = raw_dir / "patients.csv"
    for lineno, (pid, stay, outcome, count) in _rows(
            path, ("patient_id", "stay_hours", "outcome", "stay_count")):
        try:
            stay_f, count_i = float(stay), int(count)
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric stay_hours/stay_count") from None
        if outcome not in OUTCOMES:
            raise InputError(f"{path}:{lineno}: unknown outcome {outcome!r}")
        if pid in records:
            raise InputError(f"{path}:{lineno}: duplicate patient {pid!r}")
        if not stay_f > 0:
            raise InputError(f"{path}:{lineno}: stay_hours must be positive")
        records[pid] = PatientRecord(pid, stay_f, outcome, count_i)

    buckets: dict[str, dict[str, tuple[list, list]]] = {pid: {} for pid in records}
    path = raw_dir / "observations.csv"
    for lineno, (pid, vid, time, value) in _rows(
            path, ("patient_id", "variable_id", "time", "value")):
        if pid not in records:
            raise InputError(f"{path}:{lineno}: unknown patient {pid!r}")
        if vid not in table:
            raise InputError(f"{path}:{lineno}: unknown variable {vid!r}")
        try:
            t, v = float(time), float(value)
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric time/value") from None
        if not (math.isfinite(t) and math.isfinite(v)) or not 0.0 <= t <= records[pid].stay_hours:
            raise InputError(f"{path}:{lineno}: time {t} outside stay [0, {records[pid].stay_hours}]"
                             " or non-finite value")
        ts, vs = buckets[pid].setdefault(vid, ([], []))
        ts.append(t)
        vs.append(v)

    for pid, rec in records.items():
        for vid, (ts, vs) in sorted(buckets[pid].items()):
            t = np.asarray(ts)
            order = np.argsort(t, kind="stable")
            rec.observations[vid] = (t[order], np.asarray(vs)[order])
    return list(records.values()), table


def write_raw(raw_dir, records: list[PatientRecord], table: dict[str, str]) -> None:
    raw_dir = Path(raw_dir)
    raw_dir.mkdir(parents=True, exist_ok=True)
    with open(raw_dir / "variables.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable_id", "class"])
        w.writerows(table.items())
    with open(raw_dir / "patients.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "stay_hours", "outcome", "stay_count"])
        for r in records:
            w.writerow([r.patient_id, repr(float(r.stay_hours)), r.outcome, r.stay_count])
    with open(raw_dir / "observations.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "variable_id", "time", "value"])
        for r in records:
            for vid, (ts, vs) in r.observations.items():
                for t, v in zip(ts, vs):
                    w.writerow([r.patient_id, vid, repr(float(t)), repr(float(v))])


# -- grids and specs on disk -------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_grid(out_dir, grid: GridMatrix) -> tuple[Path, Path]:
    """``<pid>.grid.tsv`` and its parallel ``<pid>.mask.tsv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    L, d = grid.values.shape
    header = f"#patient_id={grid.patient_id}\tL={L}\td={d}\n" + "\t".join(grid.variables) + "\n"
    gpath = out_dir / f"{grid.patient_id}.grid.tsv"
    mpath = out_dir / f"{grid.patient_id}.mask.tsv"
    gpath.write_text(header + "".join("\t".join(map(_fmt, row)) + "\n" for row in grid.values))
    mpath.write_text(header + "".join("\t".join(str(int(c)) for c in row) + "\n"
                                      for row in grid.mask))
    return gpath, mpath


def _read_header(lines: list[str], path: Path) -> tuple[str, int, int, tuple[str, ...]]:
    if not lines or not lines[0].startswith("#"):
        raise InputError(f"{path}:1: missing grid header")
    fields = dict(kv.split("=", 1) for kv in lines[0][1:].split("\t"))
    variables = tuple(lines[1].split("\t")) if len(lines) > 1 else ()
    return fields["patient_id"], int(fields["L"]), int(fields["d"]), variables


def read_grid(grid_path) -> GridMatrix:
    gpath = Path(grid_path)
    mpath = gpath.with_name(gpath.name.replace(".grid.tsv", ".mask.tsv"))
    glines = gpath.read_text().splitlines()
    mlines = mpath.read_text().splitlines()
    pid, L, d, variables = _read_header(glines, gpath)
    values = np.array([[float(x) for x in line.split("\t")] for line in glines[2:]]).reshape(L, d)
    mask = np.array([[int(x) for x in line.split("\t")] for line in mlines[2:]],
                    dtype=np.int8).reshape(L, d)
    return GridMatrix(pid, values, mask, variables)


SPEC_COLUMNS = ("variable_id", "class", "horizon", "p5", "p95", "median", "mean", "std",
                "constant")


def write_specs(path, specs: list[VariableSpec]) -> None:
    lines = ["\t".join(SPEC_COLUMNS)]
    for s in specs:
        lines.append("\t".join([s.variable_id, s.var_class, _fmt(s.horizon), _fmt(s.p5),
                                _fmt(s.p95), _fmt(s.median), _fmt(s.mean), _fmt(s.std),
                                str(int(s.constant))]))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_specs(path) -> list[VariableSpec]:
    lines = Path(path).read_text().splitlines()
    if tuple(lines[0].split("\t")) != SPEC_COLUMNS:
        raise InputError(f"{path}:1: unexpected variable spec header")
    specs = []
    for line in lines[1:]:
        f = line.split("\t")
        specs.append(VariableSpec(f[0], f[1], float(f[3]), float(f[4]), float(f[5]),
                                  float(f[6]), float(f[7]), bool(int(f[8]))))
    return specs
