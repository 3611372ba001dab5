"""Cohort filtering and patient-level splits."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .records import PatientRecord, SplitSpec

MIN_STAY_HOURS = 72.0
MAX_STAY_HOURS = 240.0
SPLIT_RATIOS = (0.4, 0.4, 0.1, 0.1)


def filter_cohort(records: list[PatientRecord], min_hours: float = MIN_STAY_HOURS,
                  max_hours: float = MAX_STAY_HOURS) -> list[PatientRecord]:
    """Single-stay patients whose stay lies in ``[min_hours, max_hours]``."""
    return [r for r in records
            if r.stay_count == 1 and min_hours <= r.stay_hours <= max_hours]


def make_splits(patient_ids, seed: int, replicates: int = 5) -> list[SplitSpec]:
    ids = sorted(patient_ids)
    n = len(ids)
    if n < 10:
        raise ValueError(f"need at least 10 patients to split, got {n}")
    n_val = int(round(SPLIT_RATIOS[1] * n))
    n_t1 = int(round(SPLIT_RATIOS[2] * n))
    n_t2 = int(round(SPLIT_RATIOS[3] * n))
    n_train = n - n_val - n_t1 - n_t2
    out = []
    for r in range(replicates):
        perm = np.random.default_rng([seed, r]).permutation(n)
        shuffled = [ids[i] for i in perm]
        a, b, c = n_train, n_train + n_val, n_train + n_val + n_t1
        out.append(SplitSpec(r, sorted(shuffled[:a]), sorted(shuffled[a:b]),
                             sorted(shuffled[b:c]), sorted(shuffled[c:])))
    return out


def write_splits(path, splits: list[SplitSpec]) -> None:
    payload = [{"replicate": s.replicate, **{role: s.role(role) for role in SplitSpec.ROLES}}
               for s in splits]
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def read_splits(path) -> list[SplitSpec]:
    payload = json.loads(Path(path).read_text())
    return [SplitSpec(p["replicate"], p["train"], p["validation"], p["test1"], p["test2"])
            for p in payload]
