import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from imbts.metrics import (ConfusionCounts, aggregate_folds, aggregate_values, confusion,
                           is_undefined, metric_record, pr_auc, roc_auc, scalar_metrics)


# ------------------------------------------------------------------ oracles

def pairwise_auc(labels, scores):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def threshold_ap(labels, scores):
    """AP by sweeping each distinct score as a ``score >= t`` threshold."""
    n_pos = sum(labels)
    ap, prev_recall = Fraction(0), Fraction(0)
    for t in sorted(set(scores), reverse=True):
        chosen = [y for y, s in zip(labels, scores) if s >= t]
        tp = sum(chosen)
        recall = Fraction(tp, n_pos)
        ap += (recall - prev_recall) * Fraction(tp, len(chosen))
        prev_recall = recall
    return float(ap)


# ---------------------------------------------------------------- confusion

def test_confusion_example():
    c = confusion([1, 1, 0, 0, 0], [1, 0, 0, 0, 1])
    assert (c.tp, c.fn, c.tn, c.fp) == (1, 1, 2, 1)
    y = np.array([1, 0, 1, 1, 0])
    same = confusion(y, y)
    assert same.fn == same.fp == 0
    flipped = confusion(y, 1 - y)
    assert flipped.tp == flipped.tn == 0


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion([1, 0], [1])
    with pytest.raises(ValueError):
        confusion([], [])


def test_scalar_metrics_hand_case():
    m = scalar_metrics(ConfusionCounts(tp=3, fn=1, tn=5, fp=1))
    expect = {"TPR": 0.75, "TNR": 0.8333, "FPR": 0.1667, "PPV": 0.75, "F1": 0.75,
              "Gmean": 0.7906, "ACC": 0.8}
    for key, value in expect.items():
        assert m[key] == pytest.approx(value, abs=1e-4), key


def test_scalar_metrics_undefined_cases():
    m = scalar_metrics(ConfusionCounts(tp=0, fn=0, tn=4, fp=1))
    assert is_undefined(m["TPR"]) and is_undefined(m["Gmean"]) and is_undefined(m["F1"])
    assert m["TNR"] == 0.8
    # no positive predictions: precision undefined, recall 0
    m = scalar_metrics(ConfusionCounts(tp=0, fn=3, tn=4, fp=0))
    assert m["TPR"] == 0.0 and is_undefined(m["PPV"]) and is_undefined(m["F1"])
    assert m["Gmean"] == 0.0
    # both zero: F1 undefined
    m = scalar_metrics(ConfusionCounts(tp=0, fn=3, tn=4, fp=2))
    assert m["PPV"] == 0.0 and m["TPR"] == 0.0 and is_undefined(m["F1"])


def test_scalar_metrics_perfect():
    m = scalar_metrics(ConfusionCounts(tp=4, fn=0, tn=6, fp=0))
    assert m["FPR"] == 0.0
    assert all(m[k] == 1.0 for k in ("TPR", "TNR", "PPV", "F1", "Gmean", "ACC"))


def reference_scalar(tp, fn, tn, fp):
    def div(a, b):
        return a / b if b else None
    tpr, tnr, ppv = div(tp, tp + fn), div(tn, tn + fp), div(tp, tp + fp)
    f1 = None if tpr is None or ppv is None or tpr + ppv == 0 else 2 * ppv * tpr / (ppv + tpr)
    g = None if tpr is None or tnr is None else math.sqrt(tpr * tnr)
    return {"TPR": tpr, "TNR": tnr, "FPR": div(fp, fp + tn), "PPV": ppv, "F1": f1, "Gmean": g,
            "ACC": div(tp + tn, tp + fn + tn + fp)}


def test_scalar_metrics_random_counts_exact():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        counts = [int(v) for v in rng.integers(0, 6, size=4)]
        if sum(counts) == 0:
            counts[0] = 1
        got = scalar_metrics(ConfusionCounts(*counts))
        ref = reference_scalar(*counts)
        for key, value in ref.items():
            if value is None:
                assert is_undefined(got[key])
            else:
                assert got[key] == value


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_scalar_metric_identities(tp, fn, tn, fp):
    if tp + fn + tn + fp == 0:
        return
    m = scalar_metrics(ConfusionCounts(tp, fn, tn, fp))
    n = tp + fn + tn + fp
    assert round(m["ACC"] * n) == tp + tn
    if not is_undefined(m["TPR"]):
        assert round(m["TPR"] * (tp + fn)) == tp
    if not is_undefined(m["Gmean"]):
        assert m["Gmean"] ** 2 == pytest.approx(m["TPR"] * m["TNR"], abs=1e-15)


# ---------------------------------------------------------------------- AUC

def test_roc_auc_examples():
    assert roc_auc([1, 0], [0.9, 0.1]) == 1.0
    assert roc_auc([1, 0, 1, 0], [0.8, 0.8, 0.3, 0.3]) == 0.5
    assert is_undefined(roc_auc([1, 1], [0.2, 0.3]))


def test_roc_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(2, 201))
        y = rng.integers(0, 2, size=n)
        y[0], y[1] = 1, 0
        s = rng.integers(0, int(rng.integers(1, 20)), size=n) / 7.0  # plenty of ties
        auc = roc_auc(y, s)
        assert abs(auc - pairwise_auc(y, s)) <= 1e-12
        assert abs(roc_auc(y, -s) - (1 - auc)) <= 1e-12
        assert abs(roc_auc(y, np.exp(3 * s)) - auc) <= 1e-12


def test_pr_auc_examples():
    assert pr_auc([1, 0], [0.9, 0.1]) == 1.0
    assert pr_auc([0, 1], [0.9, 0.1]) == 0.5
    y = [1, 0, 0, 1, 0, 0, 0, 0]
    assert pr_auc(y, [0.3] * 8) == pytest.approx(0.25, abs=1e-15)
    assert is_undefined(pr_auc([0, 0], [0.1, 0.2]))


def test_pr_auc_perfect_ranker():
    rng = np.random.default_rng(5)
    y = rng.integers(0, 2, size=50)
    y[0] = 1
    assert pr_auc(y, y + rng.uniform(0, 0.5, size=50)) == 1.0


def test_pr_auc_matches_threshold_oracle():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(1, 15))
        y = [int(v) for v in rng.integers(0, 2, size=n)]
        y[0] = 1
        s = [float(v) for v in rng.integers(0, 5, size=n) / 4.0]
        assert pr_auc(y, s) == pytest.approx(threshold_ap(y, s), abs=1e-12)


# -------------------------------------------------------------- aggregation

def test_aggregate_values():
    a = aggregate_values([0.2, 0.4])
    assert a.mean == pytest.approx(0.3) and a.std == pytest.approx(0.1)
    a = aggregate_values([0.5, math.nan])
    assert a.mean == 0.5 and a.undefined_count == 1 and a.n_defined == 1
    assert aggregate_values([0.7]).std == 0.0
    a = aggregate_values([None, math.nan])
    assert is_undefined(a.mean) and a.to_dict()["mean"] is None


def test_aggregate_folds_records():
    folds = [{"Recall": 0.5, "F1": math.nan}, {"Recall": 1.0, "F1": 0.25}]
    agg = aggregate_folds(folds)
    assert agg["Recall"].mean == 0.75 and agg["Recall"].std == 0.25
    assert agg["F1"].mean == 0.25 and agg["F1"].undefined_count == 1
    with pytest.raises(ValueError):
        aggregate_folds([])


def test_metric_record_threshold_rule():
    rec = metric_record([0, 1, 1], [0.49, 0.5, 0.51])
    assert (rec["tp"], rec["fn"], rec["tn"], rec["fp"]) == (2, 0, 1, 0)
    assert set(("Recall", "Precision", "F1", "Gmean", "ROCAUC", "PRAUC")) <= set(rec)
