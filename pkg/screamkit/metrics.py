"""
Confusion matrices and the metrics derived from them.

Rows are true classes, columns predicted classes. Recall, precision and F1
of a class with no samples (or no predictions) are 0 and still count in the
unweighted averages, so balanced accuracy is always the plain mean of the
per-class recalls.
"""

###########
# IMPORTS #
###########

import json
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from screamkit.schemas import validate_json

logger = logging.getLogger(__name__)

##########
# ERRORS #
##########


class MetricsError(ValueError):
    """Raised for inconsistent label sequences or confusion matrices."""


class ReportWriteError(OSError):
    """A report or plot could not be written."""


#########
# TYPES #
#########


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if counts.shape != (k, k):
            raise MetricsError(f"Confusion matrix of shape {counts.shape} does not fit {k} classes")
        if np.any(counts < 0):
            raise MetricsError("Confusion counts must be non-negative.")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def k(self) -> int:
        return len(self.class_names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.class_names == other.class_names and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class ExperimentDescriptor:
    feature_set: str
    classifier: str
    classes: int
    seed: int
    name: str = ""
    collapsed_from: int | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "name": self.name,
            "feature_set": self.feature_set,
            "classifier": self.classifier,
            "classes": self.classes,
            "seed": self.seed,
        }
        if self.collapsed_from is not None:
            data["collapsed_from"] = self.collapsed_from
        return data


@dataclass(frozen=True, eq=False)
class EvalReport:
    experiment: ExperimentDescriptor
    confusion: ConfusionMatrix
    acc: float
    bal_acc: float
    macro_f1: float
    class_recall: dict[str, float] = field(default_factory=dict)
    class_precision: dict[str, float] = field(default_factory=dict)
    class_f1: dict[str, float] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.confusion.total

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment.to_dict(),
            "class_names": list(self.confusion.class_names),
            "confusion": self.confusion.counts.tolist(),
            "n_samples": self.n_samples,
            "acc": self.acc,
            "bal_acc": self.bal_acc,
            "macro_f1": self.macro_f1,
            "class_recall": dict(self.class_recall),
            "class_precision": dict(self.class_precision),
            "class_f1": dict(self.class_f1),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalReport":
        validate_json(data, "eval_report")
        exp = data["experiment"]
        return cls(
            experiment=ExperimentDescriptor(
                feature_set=exp["feature_set"],
                classifier=exp["classifier"],
                classes=exp["classes"],
                seed=exp["seed"],
                name=exp.get("name", ""),
                collapsed_from=exp.get("collapsed_from"),
            ),
            confusion=ConfusionMatrix(np.array(data["confusion"]), tuple(data["class_names"])),
            acc=data["acc"],
            bal_acc=data["bal_acc"],
            macro_f1=data["macro_f1"],
            class_recall=dict(data["class_recall"]),
            class_precision=dict(data["class_precision"]),
            class_f1=dict(data["class_f1"]),
        )


##############
# CONFUSIONS #
##############


def confusion_matrix(
    y_true: Sequence[int] | np.ndarray,
    y_pred: Sequence[int] | np.ndarray,
    k: int,
    class_names: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Count (true, predicted) index pairs into a k x k matrix."""
    true = np.asarray(y_true, dtype=np.int64).ravel()
    pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if len(true) != len(pred):
        raise MetricsError(f"Label sequences differ in length: {len(true)} vs {len(pred)}")
    for name, labels in (("true", true), ("predicted", pred)):
        bad = labels[(labels < 0) | (labels >= k)]
        if bad.size:
            raise MetricsError(f"{name.capitalize()} label {int(bad[0])} is outside [0, {k})")
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(k))
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts, names)


def confusion_from_labels(
    y_true: Sequence[str], y_pred: Sequence[str], class_names: Sequence[str]
) -> ConfusionMatrix:
    index = {name: i for i, name in enumerate(class_names)}
    try:
        true = [index[label] for label in y_true]
        pred = [index[label] for label in y_pred]
    except KeyError as e:
        raise MetricsError(f"Label {e} is not one of {list(class_names)}") from e
    return confusion_matrix(true, pred, len(class_names), class_names)


def collapse_confusion(
    cm: ConfusionMatrix, mapping: Mapping[str, str], target_names: Sequence[str]
) -> ConfusionMatrix:
    """Sum the cells of cm into the classes its names map to."""
    target_index = {name: i for i, name in enumerate(target_names)}
    missing = [name for name in cm.class_names if name not in mapping]
    if missing:
        raise MetricsError(f"Mapping does not cover classes {missing}")
    try:
        mapped = np.array([target_index[mapping[name]] for name in cm.class_names], dtype=np.int64)
    except KeyError as e:
        raise MetricsError(f"Mapped class {e} is not one of {list(target_names)}") from e
    out = np.zeros((len(target_names), len(target_names)), dtype=np.int64)
    np.add.at(out, (mapped[:, None], mapped[None, :]), cm.counts)
    return ConfusionMatrix(out, tuple(target_names))


###########
# METRICS #
###########


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(len(num), dtype=np.float64)
    nonzero = den > 0
    out[nonzero] = num[nonzero] / den[nonzero]
    return out


def class_metrics(cm: ConfusionMatrix) -> dict[str, np.ndarray]:
    """Per-class recall, precision and F1 in class order."""
    diag = np.diag(cm.counts).astype(np.float64)
    recall = _safe_ratio(diag, cm.counts.sum(axis=1).astype(np.float64))
    precision = _safe_ratio(diag, cm.counts.sum(axis=0).astype(np.float64))
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    return {"recall": recall, "precision": precision, "f1": f1}


def metrics(cm: ConfusionMatrix) -> dict[str, Any]:
    per_class = class_metrics(cm)
    total = cm.total
    acc = float(np.trace(cm.counts)) / total if total else 0.0
    return {
        "acc": acc,
        "bal_acc": math.fsum(per_class["recall"]) / cm.k,
        "macro_f1": math.fsum(per_class["f1"]) / cm.k,
        "class_recall": dict(zip(cm.class_names, per_class["recall"].tolist(), strict=True)),
        "class_precision": dict(zip(cm.class_names, per_class["precision"].tolist(), strict=True)),
        "class_f1": dict(zip(cm.class_names, per_class["f1"].tolist(), strict=True)),
    }


def build_report(cm: ConfusionMatrix, experiment: ExperimentDescriptor) -> EvalReport:
    return EvalReport(experiment=experiment, confusion=cm, **metrics(cm))


def collapse_report(
    report: EvalReport, mapping: Mapping[str, str], target_names: Sequence[str]
) -> EvalReport:
    """Report of a 6-class result read on the 3-class scheme."""
    cm = collapse_confusion(report.confusion, mapping, target_names)
    exp = report.experiment
    collapsed = ExperimentDescriptor(
        feature_set=exp.feature_set,
        classifier=exp.classifier,
        classes=len(target_names),
        seed=exp.seed,
        name=f"{exp.name}_collapsed" if exp.name else "",
        collapsed_from=exp.classes,
    )
    return build_report(cm, collapsed)


##########
# OUTPUT #
##########


def emit_report(report: EvalReport, path: str | Path) -> None:
    """Write the report as schema-checked, key-sorted JSON."""
    data = report.to_dict()
    validate_json(data, "eval_report")
    try:
        with open(path, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise ReportWriteError(f"Cannot write report to {path}: {e}") from e
    logger.info(f"Wrote report to {path} (bal_acc = {report.bal_acc:.4f})")


def read_report(path: str | Path) -> EvalReport:
    with open(path) as f:
        return EvalReport.from_dict(json.load(f))


def summarize_reports(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """One row of headline metrics per report."""
    columns = ["name", "feature_set", "classifier", "classes", "n_samples", "acc", "bal_acc", "macro_f1"]
    rows = [
        {
            "name": r.experiment.name,
            "feature_set": r.experiment.feature_set,
            "classifier": r.experiment.classifier,
            "classes": r.experiment.classes,
            "n_samples": r.n_samples,
            "acc": r.acc,
            "bal_acc": r.bal_acc,
            "macro_f1": r.macro_f1,
        }
        for r in reports
    ]
    return pd.DataFrame(rows, columns=columns)
