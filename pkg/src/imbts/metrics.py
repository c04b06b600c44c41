"""Confusion-matrix metrics, ROC-AUC, average precision and fold aggregation.

A metric whose denominator is zero is UNDEFINED, represented as ``nan``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

UNDEFINED = math.nan

SCALAR_METRICS = ("TPR", "TNR", "FPR", "PPV", "F1", "Gmean", "ACC")
HEADLINE = ("Recall", "Precision", "F1", "Gmean", "ROCAUC", "PRAUC")


def is_undefined(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    def to_dict(self) -> dict:
        return asdict(self)


def confusion(labels, predictions) -> ConfusionCounts:
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if y.shape != p.shape:
        raise ValueError(f"labels and predictions differ in length: {y.shape} vs {p.shape}")
    if y.size == 0:
        raise ValueError("confusion of an empty sample")
    return ConfusionCounts(
        tp=int(np.sum((y == 1) & (p == 1))),
        fn=int(np.sum((y == 1) & (p == 0))),
        tn=int(np.sum((y == 0) & (p == 0))),
        fp=int(np.sum((y == 0) & (p == 1))),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else UNDEFINED


def scalar_metrics(c: ConfusionCounts) -> dict[str, float]:
    tpr = _ratio(c.tp, c.tp + c.fn)
    tnr = _ratio(c.tn, c.tn + c.fp)
    ppv = _ratio(c.tp, c.tp + c.fp)
    if is_undefined(ppv) or is_undefined(tpr) or ppv + tpr == 0:
        f1 = UNDEFINED
    else:
        f1 = 2 * ppv * tpr / (ppv + tpr)
    gmean = UNDEFINED if is_undefined(tpr) or is_undefined(tnr) else math.sqrt(tpr * tnr)
    return {
        "TPR": tpr,
        "TNR": tnr,
        "FPR": _ratio(c.fp, c.fp + c.tn),
        "PPV": ppv,
        "F1": f1,
        "Gmean": gmean,
        "ACC": _ratio(c.tp + c.tn, c.total),
    }


def roc_auc(labels, scores) -> float:
    """Mann-Whitney AUC with average ranks for ties; nan for single-class input."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        return UNDEFINED
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(labels, scores) -> float:
    """Average precision, stepping recall at each distinct score threshold.

    Samples are sorted by descending score (stable on index); precision and
    recall are read at the end of each run of tied scores. nan without positives.
    """
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        return UNDEFINED
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order] == 1
    s_sorted = s[order]
    tp = np.cumsum(y_sorted)
    seen = np.arange(1, len(y) + 1)
    ends = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(y) - 1]
    precision = tp[ends] / seen[ends]
    recall = tp[ends] / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    n_defined: int
    undefined_count: int

    def to_dict(self) -> dict:
        return {"mean": None if is_undefined(self.mean) else self.mean,
                "std": None if is_undefined(self.std) else self.std,
                "n_defined": self.n_defined, "undefined_count": self.undefined_count}


def aggregate_values(values) -> Aggregate:
    vals = [float(v) for v in values if not is_undefined(v)]
    undefined = len(list(values)) - len(vals)
    if not vals:
        return Aggregate(UNDEFINED, UNDEFINED, 0, undefined)
    arr = np.asarray(vals)
    return Aggregate(float(arr.mean()), float(arr.std()), len(vals), undefined)


def aggregate_folds(per_fold: list[dict[str, float]]) -> dict[str, Aggregate]:
    """Mean and population std per metric, skipping undefined fold values."""
    if not per_fold:
        raise ValueError("aggregate_folds needs at least one fold")
    keys = [k for k in per_fold[0] if isinstance(per_fold[0][k], (int, float)) or per_fold[0][k] is None]
    return {k: aggregate_values([rec.get(k) for rec in per_fold]) for k in keys}


def metric_record(labels, scores, threshold: float = 0.5) -> dict[str, float]:
    """Hard metrics at ``threshold`` plus both ranking AUCs."""
    scores = np.asarray(scores, dtype=np.float64)
    preds = (scores >= threshold).astype(np.int64)
    c = confusion(labels, preds)
    m = scalar_metrics(c)
    return {
        "Recall": m["TPR"], "Precision": m["PPV"], "F1": m["F1"], "Gmean": m["Gmean"],
        "ROCAUC": roc_auc(labels, scores), "PRAUC": pr_auc(labels, scores),
        "TPR": m["TPR"], "TNR": m["TNR"], "FPR": m["FPR"], "ACC": m["ACC"],
        "tp": c.tp, "fn": c.fn, "tn": c.tn, "fp": c.fp,
    }
