"""Checks that the split protocol held across a run."""

from __future__ import annotations

from ..preprocess.records import SplitSpec


class SplitAuditError(AssertionError):
    pass


def audit_splits(splits: list[SplitSpec], cohort_ids) -> None:
    """Every replicate partitions the cohort: no id in two roles, none missing or foreign."""
    cohort = set(cohort_ids)
    for s in splits:
        seen: dict[str, str] = {}
        for role in SplitSpec.ROLES:
            for pid in s.role(role):
                if pid in seen:
                    raise SplitAuditError(f"replicate {s.replicate}: {pid} is in both "
                                          f"{seen[pid]} and {role}")
                seen[pid] = role
        if set(seen) != cohort:
            extra, missing = set(seen) - cohort, cohort - set(seen)
            raise SplitAuditError(f"replicate {s.replicate}: {len(extra)} ids outside the cohort, "
                                  f"{len(missing)} cohort ids unassigned")


def audit_report(cells, splits: list[SplitSpec]) -> None:
    """Every reported cell was scored on test2 patients of its own replicate only."""
    by_rep = {s.replicate: set(s.test2) for s in splits}
    for c in cells:
        if c.scored_role != "test2":
            raise SplitAuditError(f"{c.key()} replicate {c.replicate} scored on {c.scored_role}")
        if c.available and not c.scored_ids:
            raise SplitAuditError(f"{c.key()} replicate {c.replicate} has no scored ids recorded")
        stray = set(c.scored_ids) - by_rep[c.replicate]
        if stray:
            raise SplitAuditError(f"{c.key()} replicate {c.replicate} scored {len(stray)} "
                                  "patients outside test2")
