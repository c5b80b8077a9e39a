"""Threshold calibration, classification and evaluation metrics.

Attack (label 1) is the positive class throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ThresholdModel:
    threshold: float
    method: str  # "percentile" or "fixed"
    parameter: float
    calibration_size: int = 0

    def __post_init__(self):
        if not self.threshold >= 0:
            raise ValueError("threshold must be non-negative")

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "method": self.method,
            "parameter": self.parameter,
            "calibration_size": self.calibration_size,
        }


def calibrate_threshold(errors, labels, method: str = "percentile", value: float = 95.0) -> ThresholdModel:
    """``percentile``: the ``value``-th percentile (linear interpolation) of
    errors on normal rows. ``fixed``: ``value`` itself."""
    errors = np.asarray(errors, dtype=np.float64)
    labels = np.asarray(labels)
    normal = errors[labels == 0]
    if method == "fixed":
        return ThresholdModel(float(value), "fixed", float(value), len(normal))
    if method != "percentile":
        raise ValueError(f"unknown threshold method {method!r}")
    if len(normal) == 0:
        raise ValueError("threshold calibration needs at least one normal row")
    if not 0 <= value <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    return ThresholdModel(float(np.percentile(normal, value)), "percentile", float(value), len(normal))


def classify(errors, t: ThresholdModel) -> np.ndarray:
    """1 where the error strictly exceeds the threshold."""
    return (np.asarray(errors, dtype=np.float64) > t.threshold).astype(np.int8)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class EvaluationReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    false_positive_rate: float
    normal: ClassMetrics
    attack: ClassMetrics
    macro: ClassMetrics
    warnings: list[str] = field(default_factory=list)

    @property
    def rows(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "accuracy": self.accuracy,
            "false_positive_rate": self.false_positive_rate,
            "per_class": {"normal": self.normal.to_dict(), "attack": self.attack.to_dict()},
            "macro": self.macro.to_dict(),
            "warnings": list(self.warnings),
        }


def evaluate(pred, truth) -> EvaluationReport:
    pred = np.asarray(pred).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(truth)} labels")
    if not (np.isin(pred, (0, 1)).all() and np.isin(truth, (0, 1)).all()):
        raise ValueError("labels must be 0 or 1")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))

    a_p, a_r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    n_p, n_r = _ratio(tn, tn + fn), _ratio(tn, tn + fp)
    attack = ClassMetrics(a_p, a_r, _f1(a_p, a_r))
    normal = ClassMetrics(n_p, n_r, _f1(n_p, n_r))
    macro = ClassMetrics(
        (attack.precision + normal.precision) / 2,
        (attack.recall + normal.recall) / 2,
        (attack.f1 + normal.f1) / 2,
    )
    return EvaluationReport(
        tp, fp, tn, fn,
        accuracy=_ratio(tp + tn, len(truth)),
        false_positive_rate=_ratio(fp, fp + tn),
        normal=normal,
        attack=attack,
        macro=macro,
    )


@dataclass
class ErrorHistogram:
    edges: np.ndarray
    count_normal: np.ndarray
    count_attack: np.ndarray

    @property
    def bin_count(self) -> int:
        return len(self.count_normal)

    @property
    def bins(self) -> list[tuple[float, float, int, int]]:
        return [
            (float(self.edges[i]), float(self.edges[i + 1]), int(self.count_normal[i]), int(self.count_attack[i]))
            for i in range(self.bin_count)
        ]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bin_lo", "bin_hi", "count_normal", "count_attack"])
            for lo, hi, cn, ca in self.bins:
                writer.writerow([repr(lo), repr(hi), cn, ca])


def export_error_histogram(errors, truth, bin_count: int = 50) -> ErrorHistogram:
    """Equal-width bins over [0, max error]; the max lands in the last bin."""
    errors = np.asarray(errors, dtype=np.float64)
    truth = np.asarray(truth)
    if len(errors) == 0:
        raise ValueError("cannot histogram an empty error vector")
    if bin_count < 1:
        raise ValueError("bin_count must be positive")
    top = float(errors.max())
    edges = np.linspace(0.0, top, bin_count + 1)
    if top > 0:
        idx = np.minimum((errors / top * bin_count).astype(np.int64), bin_count - 1)
    else:
        idx = np.full(len(errors), bin_count - 1)
    return ErrorHistogram(
        edges,
        np.bincount(idx[truth == 0], minlength=bin_count),
        np.bincount(idx[truth == 1], minlength=bin_count),
    )
