"""Probes, classifiers, metrics and the replicate protocol."""

from .audit import SplitAuditError, audit_report, audit_splits
from .datasets import (
    RepresentationDump, raw_sequences, represent, representation_sequences, signal_windows,
)
from .experiment import (
    LABEL_CURVE_FRACTIONS, PROBE_ROLES, ExperimentConfig, ReplicateProber, ReplicateResult,
    Selection, TestScores, best_representation, dimension_sweep, fit_representation,
    label_subset, represent_roles, run_experiment, run_replicate,
)
from .labels import TASKS, LabeledWindowSet, PatientLabels, label_windows, window_label
from .metrics import MetricUndefined, auprc, auroc
from .probes import (
    ProbeConfig, ScoredSequence, SequenceClassifier, SignalProbe, fit_classifier,
    fit_signal_probe, pad_batch, score_sequences,
)
from .report import METRICS, Aggregate, Cell, EvalReport, read_cells

__all__ = [
    "LABEL_CURVE_FRACTIONS", "METRICS", "PROBE_ROLES", "ReplicateProber", "fit_representation",
    "represent_roles", "Aggregate", "Cell", "EvalReport", "ExperimentConfig",
    "LabeledWindowSet", "MetricUndefined", "PatientLabels", "ProbeConfig", "ReplicateResult",
    "RepresentationDump", "ScoredSequence", "Selection", "SequenceClassifier", "SignalProbe",
    "SplitAuditError", "TASKS", "TestScores", "audit_report", "audit_splits", "auprc", "auroc",
    "best_representation", "dimension_sweep", "fit_classifier", "fit_signal_probe",
    "label_subset", "label_windows", "pad_batch", "raw_sequences", "read_cells", "represent",
    "representation_sequences", "run_experiment", "run_replicate", "score_sequences",
    "signal_windows", "window_label",
]
