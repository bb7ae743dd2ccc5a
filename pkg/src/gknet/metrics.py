"""Confusion-matrix classification metrics with normal-approximation CIs.

Conventions: confusion matrix rows are true classes, columns are predicted
classes. Per-class precision/recall/F1 are one-vs-rest; any 0/0 case is
defined as 0. Confidence intervals use radius z * sqrt(m*(1-m)/n), clamped
into [0, 1]; per-class intervals use that class's support as n, the accuracy
interval uses the total sample count.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

Z_95 = 1.96


def confusion_matrix(true_labels, predicted_labels, classes):
    """Count matrix [K, K]: rows true, columns predicted."""
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.shape != p.shape or t.ndim != 1:
        raise ShapeError("label vectors must be rank 1 and equally long")
    if classes < 1:
        raise ConfigError(f"classes must be >= 1, got {classes}")
    counts = np.zeros((classes, classes), dtype=np.int64)
    if t.size:
        both = np.stack([t, p])
        if both.min() < 0 or both.max() >= classes:
            raise ShapeError(f"labels must lie in [0, {classes})")
        np.add.at(counts, (t, p), 1)
    return counts


def _safe_div(num, den):
    # plain float so downstream repr()/json stay clean of numpy scalar types
    return float(num) / float(den) if den > 0 else 0.0


def per_class_counts(counts):
    """(tp, fp, fn) arrays, one entry per class."""
    counts = np.asarray(counts)
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0).astype(np.float64) - tp
    fn = counts.sum(axis=1).astype(np.float64) - tp
    return tp, fp, fn


def precision_recall_f1(counts):
    """Per-class (precision, recall, f1) lists from a confusion matrix."""
    tp, fp, fn = per_class_counts(counts)
    precision, recall, f1 = [], [], []
    for k in range(len(tp)):
        p = _safe_div(tp[k], tp[k] + fp[k])
        r = _safe_div(tp[k], tp[k] + fn[k])
        f = _safe_div(2.0 * p * r, p + r)
        precision.append(p)
        recall.append(r)
        f1.append(f)
    return precision, recall, f1


def accuracy(counts):
    """Trace over total count; 0 for an empty matrix."""
    counts = np.asarray(counts)
    return _safe_div(float(np.trace(counts)), float(counts.sum()))


def confidence_interval(metric, n, z=Z_95):
    """Normal-approximation CI half-width (radius) z * sqrt(m*(1-m)/n)."""
    if not 0.0 <= metric <= 1.0:
        raise ConfigError(f"metric must be in [0, 1], got {metric}")
    if n <= 0:
        raise ConfigError(f"n must be positive, got {n}")
    if z <= 0:
        raise ConfigError(f"z must be > 0, got {z}")
    return float(z * np.sqrt(metric * (1.0 - metric) / n))


def interval_bounds(metric, n, z=Z_95):
    """(lo, hi) interval around `metric`, clamped into [0, 1].

    A zero-support class gets the degenerate interval (metric, metric).
    """
    if n == 0:
        return (metric, metric)
    r = confidence_interval(metric, n, z)
    return (max(0.0, metric - r), min(1.0, metric + r))


def top_k_accuracy(probabilities, labels, k):
    """Share of samples whose true class is among the k highest scores."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    if probabilities.ndim != 2 or len(labels) != len(probabilities):
        raise ShapeError("need [N, K] scores and N labels")
    if not 1 <= k <= probabilities.shape[1]:
        raise ConfigError(f"k must be in [1, {probabilities.shape[1]}], got {k}")
    ranked = np.argsort(-probabilities, axis=1, kind="stable")[:, :k]
    hits = (ranked == labels[:, None]).any(axis=1)
    return float(hits.mean()) if len(labels) else 0.0


@dataclass
class MetricsReport:
    """Evaluation summary for one labelled set."""

    class_names: list
    support: list
    precision: list
    recall: list
    f1: list
    accuracy: float
    z: float = Z_95
    total: int = 0
    precision_ci: list = field(default_factory=list)
    recall_ci: list = field(default_factory=list)
    f1_ci: list = field(default_factory=list)
    accuracy_ci: tuple = (0.0, 0.0)

    @property
    def macro_precision(self):
        return float(np.mean(self.precision)) if self.precision else 0.0

    @property
    def macro_recall(self):
        return float(np.mean(self.recall)) if self.recall else 0.0

    @property
    def macro_f1(self):
        return float(np.mean(self.f1)) if self.f1 else 0.0

    def to_dict(self):
        classes = []
        for k, name in enumerate(self.class_names):
            classes.append(
                {
                    "name": name,
                    "precision": self.precision[k],
                    "recall": self.recall[k],
                    "f1": self.f1[k],
                    "ci": list(self.f1_ci[k]),
                    "support": int(self.support[k]),
                }
            )
        return {
            "classes": classes,
            "accuracy": self.accuracy,
            "accuracy_ci": list(self.accuracy_ci),
            "macro_f1": self.macro_f1,
            "z": self.z,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def metrics_report(counts, class_names=None, z=Z_95):
    """Build a MetricsReport from a confusion matrix."""
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ShapeError(f"confusion matrix must be square, got {counts.shape}")
    k = counts.shape[0]
    if class_names is None:
        class_names = [str(i) for i in range(k)]
    if len(class_names) != k:
        raise ShapeError(f"{len(class_names)} names for {k} classes")
    precision, recall, f1 = precision_recall_f1(counts)
    support = counts.sum(axis=1).astype(int).tolist()
    total = int(counts.sum())
    acc = accuracy(counts)
    report = MetricsReport(
        class_names=list(class_names),
        support=support,
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=acc,
        z=z,
        total=total,
        precision_ci=[interval_bounds(precision[i], support[i], z) for i in range(k)],
        recall_ci=[interval_bounds(recall[i], support[i], z) for i in range(k)],
        f1_ci=[interval_bounds(f1[i], support[i], z) for i in range(k)],
        accuracy_ci=interval_bounds(acc, total, z),
    )
    return report
