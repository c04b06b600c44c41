"""Acceptance criteria 1-9, one PASS/FAIL line each."""

import json
import math
import statistics
import time
import warnings

import mpmath
import numpy as np
import pytest

import imbts.harness as harness
from imbts.cli import main
from imbts.costloss import (LambdaState, class_balanced_loss, loss_gradient, update_lambda,
                            weighted_bce, weighted_mean_loss_from_logits)
from imbts.data import SynthConfig, imbalance_ratio, stratified_kfold, synth_generate
from imbts.harness import TrainConfig, batch_loss_and_grad, run_cross_validation
from imbts.metrics import ConfusionCounts, is_undefined, pr_auc, roc_auc, scalar_metrics
from imbts.nn import functional as F
from imbts.nn.functional import sigmoid_array
from imbts.resampling import (SamplerConfig, enn_removals, resample,
                              tomek_link_pairs)

from gradcheck import check_op, rel_err
from test_metrics import pairwise_auc, reference_scalar, threshold_ap
from test_resampling import blobs, brute_enn, brute_tomek, check_convex


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


# ------------------------------------------------------------ criterion 1

def _away_from_zero(r, shape, gap=1e-3):
    x = r.normal(size=shape)
    x[np.abs(x) < gap] += 2 * gap
    return x


def _distinct(r, shape, gap=1e-3):
    n = int(np.prod(shape))
    vals = r.permutation(n) * gap * 3 + r.uniform(0, gap, size=n)
    return (vals - vals.mean()).reshape(shape)


def _conv(r):
    n, c, f, k = (int(v) for v in r.integers(1, 4, size=4))
    k += int(r.integers(0, 3))
    stride = int(r.integers(1, 3))
    padding = str(r.choice(["same", "valid"]))
    length = k + int(r.integers(0, 6))
    return (lambda x, w, b: F.conv1d(x, w, b, stride, padding),
            [r.normal(size=(n, c, length)), r.normal(size=(f, c, k)), r.normal(size=f)])


def _pool(r):
    pool = int(r.integers(2, 4))
    shape = (int(r.integers(1, 4)), int(r.integers(1, 4)), pool * int(r.integers(1, 4)))
    return (lambda x: F.max_pool1d(x, pool), [_distinct(r, shape)])


def _bn(r):
    n, c, length = int(r.integers(2, 5)), int(r.integers(1, 4)), int(r.integers(1, 6))
    training = bool(r.integers(0, 2))
    rm, rv = r.normal(size=c), r.uniform(0.5, 2.0, size=c)
    return (lambda x, g, b: F.batch_norm1d(x, g, b, rm.copy(), rv.copy(), training),
            [r.normal(size=(n, c, length)), r.normal(size=c), r.normal(size=c)])


def _shape(r, ndim):
    return tuple(int(v) for v in r.integers(1, 5, size=ndim))


def _dense(r):
    n, i, o = _shape(r, 3)
    return F.dense, [r.normal(size=(n, i)), r.normal(size=(i, o)), r.normal(size=o)]


def _concat(r):
    n, a, b = _shape(r, 3)
    return F.concat_features, [r.normal(size=(n, a)), r.normal(size=(n, b))]


def _residual(r):
    s = _shape(r, 3)
    return F.residual_add, [r.normal(size=s), r.normal(size=s)]


def _dropout(r):
    seed = int(r.integers(0, 2**31))
    return (lambda x: F.dropout(x, 0.3, True, np.random.default_rng(seed)),
            [r.normal(size=_shape(r, 2))])


def _lstm(r):
    n, c, h, length = _shape(r, 4)
    return F.lstm, [r.normal(size=(n, c, length)), r.normal(scale=0.5, size=(c, 4 * h)),
                    r.normal(scale=0.5, size=(h, 4 * h)), r.normal(scale=0.5, size=4 * h)]


LAYER_CASES = {
    "conv1d": _conv,
    "max_pool1d": _pool,
    "global_avg_pool1d": lambda r: (F.global_avg_pool1d, [r.normal(size=_shape(r, 3))]),
    "batch_norm1d": _bn,
    "relu": lambda r: (F.relu, [_away_from_zero(r, _shape(r, 2))]),
    "sigmoid": lambda r: (F.sigmoid, [r.normal(size=_shape(r, 2))]),
    "tanh": lambda r: (F.tanh, [r.normal(size=_shape(r, 2))]),
    "dropout": _dropout,
    "dense": _dense,
    "flatten": lambda r: (F.flatten, [r.normal(size=_shape(r, 3))]),
    "residual_add": _residual,
    "concat_features": _concat,
    "lstm": _lstm,
}


def _mp_loss(z, y, w_pos, w_neg, balanced):
    """The loss chain in 50-digit arithmetic, so the derivative oracle carries no float noise."""
    terms = []
    for zi, yi in zip(z, y):
        p = 1 / (1 + mpmath.exp(-zi))
        terms.append((yi, w_pos * -mpmath.log(p) if yi == 1 else w_neg * -mpmath.log(1 - p)))
    if not balanced:
        return mpmath.fsum(t for _, t in terms) / len(terms)
    pos = [t for yi, t in terms if yi == 1]
    neg = [t for yi, t in terms if yi == 0]
    return mpmath.fsum(pos) / len(pos) + mpmath.fsum(neg) / len(neg)


def _loss_chain_error(r, fixed):
    n = int(r.integers(2, 16))
    y = r.integers(0, 2, size=n)
    y[0], y[1] = 1, 0
    z = r.normal(scale=2.0, size=n)
    if fixed:
        w_pos, w_neg = r.uniform(1, 50), 1.0
        ana = weighted_mean_loss_from_logits(z, y, w_pos)[1]
    else:
        s = update_lambda(r.uniform(1, 50), r.uniform(), r.uniform(),
                          str(r.choice(["minority", "literal"])))
        w_pos, w_neg = s.weight_pos, s.weight_neg
        ana = loss_gradient(sigmoid_array(z), y, s)
    with mpmath.workdps(50):
        zs = [mpmath.mpf(float(v)) for v in z]

        def partial(i):
            f = lambda v: _mp_loss(zs[:i] + [v] + zs[i + 1:], y, w_pos, w_neg, not fixed)
            return float(mpmath.diff(f, zs[i]))
        num = [partial(i) for i in range(n)]
    return rel_err(ana, num)


def test_criterion_1_gradient_suite(verdict):
    start = time.perf_counter()
    r = np.random.default_rng(2024)
    worst_layer = {}
    for name, case in LAYER_CASES.items():
        worst_layer[name] = max(check_op(*case(r), r) for _ in range(100))
    worst_loss = {kind: max(_loss_chain_error(r, kind == "fixed_cost") for _ in range(100))
                  for kind in ("cost_sensitive", "fixed_cost")}
    elapsed = time.perf_counter() - start
    bad = {k: v for k, v in worst_layer.items() if v > 1e-4}
    bad.update({k: v for k, v in worst_loss.items() if v > 1e-6})
    ok = not bad and elapsed <= 120
    verdict(1, ok, f"{len(worst_layer)} layers and 2 loss chains x 100 trials, worst layer "
                   f"err {max(worst_layer.values()):.2e}, worst loss err "
                   f"{max(worst_loss.values()):.2e}, {elapsed:.1f}s, failing {bad}")


# ------------------------------------------------------------ criterion 2

def test_criterion_2_lambda_contract(verdict):
    r = np.random.default_rng(7)
    failures = 0
    for _ in range(10_000):
        ir, g, a = r.uniform(1.0, 200.0), r.uniform(), r.uniform()
        lam = update_lambda(ir, g, a).lambda_minority
        if not ir * math.exp(-1) <= lam <= ir:
            failures += 1
        g2 = g + (1.0 - g) * r.uniform(0.01, 1.0)
        a2 = a + (1.0 - a) * r.uniform(0.01, 1.0)
        if g2 > g and not update_lambda(ir, g2, a).lambda_minority < lam:
            failures += 1
        if a2 > a and not update_lambda(ir, g, a2).lambda_minority < lam:
            failures += 1
    top = update_lambda(43.9379, 0.0, 0.0).lambda_minority
    low = update_lambda(43.9379, 1.0, 1.0).lambda_minority
    pinned = abs(top - 43.9379) <= 1e-3 and abs(low - 43.9379 * math.exp(-1)) <= 1e-3
    verdict(2, failures == 0 and pinned,
            f"10^4 triples, {failures} bound/monotonicity failures, pinned {top:.4f} and {low:.4f}")


# ------------------------------------------------------------ criterion 3

def test_criterion_3_metric_oracles(verdict):
    r = np.random.default_rng(3)
    scalar_bad = 0
    for _ in range(1000):
        counts = [int(v) for v in r.integers(0, 8, size=4)]
        if sum(counts) == 0:
            counts[0] = 1
        got, ref = scalar_metrics(ConfusionCounts(*counts)), reference_scalar(*counts)
        for key, value in ref.items():
            same = is_undefined(got[key]) if value is None else got[key] == value
            scalar_bad += not same

    roc_worst = 0.0
    for _ in range(200):
        n = int(r.integers(2, 201))
        y = r.integers(0, 2, size=n)
        y[0], y[1] = 1, 0
        s = r.integers(0, int(r.integers(2, 30)), size=n) / 7.0  # coarse grid forces ties
        roc_worst = max(roc_worst, abs(roc_auc(y, s) - pairwise_auc(y.tolist(), s.tolist())))

    ap_worst = 0.0
    for _ in range(1000):
        n = int(r.integers(1, 13))
        y = r.integers(0, 2, size=n)
        y[0] = 1
        s = r.integers(0, 6, size=n) / 5.0
        ap_worst = max(ap_worst, abs(pr_auc(y, s) - threshold_ap(y.tolist(), s.tolist())))

    ok = scalar_bad == 0 and roc_worst <= 1e-12 and ap_worst <= 1e-12
    verdict(3, ok, f"scalar mismatches {scalar_bad}/7000, ROC worst {roc_worst:.1e}, "
                   f"AP worst {ap_worst:.1e}")


# ------------------------------------------------------------ criterion 4

def test_criterion_4_sampler_oracles(verdict):
    r = np.random.default_rng(4)
    clean_bad, convex_rows, balance_bad = 0, 0, []
    for seed in range(20):
        n = int(r.integers(20, 201))
        n_pos = int(r.integers(3, n // 3))
        fm = blobs(n_pos, n - n_pos, float(r.uniform(0.5, 2.0)), seed=seed, d=int(r.integers(1, 4)))
        clean_bad += set(tomek_link_pairs(fm)) != brute_tomek(fm)
        clean_bad += enn_removals(fm, 3) != brute_enn(fm, 3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for method in ("smote", "smote_b1", "smote_b2", "adasyn"):
                convex_rows += check_convex(resample(fm, SamplerConfig(method, seed=seed)), fm)
            for method in ("ros", "rus", "smote", "adasyn", "nearmiss1"):
                out = resample(fm, SamplerConfig(method, target_ratio=1.0, seed=seed))
                if out.n_pos != out.n_neg:
                    balance_bad.append((seed, method, out.n_pos, out.n_neg))
    ok = clean_bad == 0 and not balance_bad and convex_rows > 0
    verdict(4, ok, f"20 datasets n<=200: Tomek/ENN mismatches {clean_bad}, {convex_rows} "
                   f"synthetic rows convex, balance failures {balance_bad}")


# ------------------------------------------------------------ criterion 5

def test_criterion_5_imbalance_arithmetic(verdict):
    results = []
    for n_neg, n_pos, expect in ((130188, 2963, 43.9379), (3664, 196, 18.6939)):
        got = imbalance_ratio(np.r_[np.zeros(n_neg, int), np.ones(n_pos, int)])
        results.append((got, abs(got - expect) <= 5e-5))
    verdict(5, all(ok for _, ok in results),
            ", ".join(f"IR {got:.6f}" for got, _ in results))


# ------------------------------------------------------------ criterion 6

ORDERING_SEEDS = range(5)


def test_criterion_6_ordering_reproduction(verdict):
    start = time.perf_counter()
    gmeans = {"plain": [], "cost_sensitive": []}
    recall_undefined = 0
    for seed in ORDERING_SEEDS:
        data = synth_generate(SynthConfig(seed=seed))
        for mode in gmeans:
            report = run_cross_validation(data, "cnn", TrainConfig(mode=mode, epochs=20,
                                                                   batch_size=512, seed=seed), k=5)
            gmeans[mode].append(report.aggregates["Gmean"]["mean"] or 0.0)
            if mode == "cost_sensitive":
                recall_undefined += sum(is_undefined(v) for v in report.metric_values("Recall"))
    elapsed = time.perf_counter() - start
    gap = statistics.median(gmeans["cost_sensitive"]) - statistics.median(gmeans["plain"])
    ok = gap >= 0.10 and recall_undefined == 0 and elapsed <= 900
    fmt = lambda v: "[" + ", ".join(f"{x:.3f}" for x in v) + "]"
    verdict(6, ok, f"G-mean plain {fmt(gmeans['plain'])}, cost-sensitive "
                   f"{fmt(gmeans['cost_sensitive'])}, median gap {gap:.3f}, undefined "
                   f"cost-sensitive recalls {recall_undefined}, {elapsed:.0f}s")


# ------------------------------------------------------------ criterion 7

def test_criterion_7_mode_equivalences(verdict):
    r = np.random.default_rng(8)
    loss_bad = 0
    for _ in range(200):
        n = int(r.integers(2, 64))
        z = r.normal(scale=3, size=n)
        y = r.integers(0, 2, size=n)
        y[0], y[1] = 1, 0
        loss, grad, _ = batch_loss_and_grad(z, y, TrainConfig(), 1.0, 0.0, 0.0)
        unit = LambdaState.unit()
        p = sigmoid_array(z)
        loss_bad += loss != class_balanced_loss(weighted_bce(p, y, unit), y)
        loss_bad += not np.array_equal(grad, loss_gradient(p, y, unit))
    p = r.uniform(1e-6, 1 - 1e-6, size=1000)
    y = r.integers(0, 2, size=1000)
    ce = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    diff = float(np.max(np.abs(weighted_bce(p, y, LambdaState.unit()) - ce) / np.maximum(ce, 1.0)))
    verdict(7, loss_bad == 0 and diff <= 1e-15,
            f"200 batches, {loss_bad} bitwise mismatches; unit-weight BCE vs cross-entropy "
            f"max rel. diff {diff:.1e}")


# ------------------------------------------------------------ criterion 8

def _strip_times(doc):
    doc.pop("wall_time")
    for fold in doc["folds"]:
        fold.pop("train_wall_time")
    return doc


def test_criterion_8_determinism(verdict, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "version": 1, "model": "cnn", "folds": 4,
        "model_overrides": {"filters": [3, 3, 3], "dense_units": 8},
        "data": {"synth": {"n_pos": 16, "n_neg": 160, "channels": 2, "length": 32, "seed": 2}},
        "train": {"mode": "cost_sensitive", "epochs": 3, "batch_size": 32, "seed": 9}}))
    paths = [tmp_path / f"{name}.json" for name in ("a", "b", "c")]
    codes = [main(["run", "--config", str(cfg), "--out", str(paths[0])]),
             main(["run", "--config", str(cfg), "--out", str(paths[1])]),
             main(["run", "--config", str(cfg), "--out", str(paths[2]), "--jobs", "4"])]
    a, b, c = (_strip_times(json.loads(p.read_text())) for p in paths)
    same_runs = a == b
    same_jobs = [f["metrics"] for f in a["folds"]] == [f["metrics"] for f in c["folds"]]
    ok = codes == [0, 0, 0] and same_runs and same_jobs
    verdict(8, ok, f"exit codes {codes}, repeated run identical {same_runs}, "
                   f"serial vs 4 workers identical {same_jobs}")


# ------------------------------------------------------------ criterion 9

def test_criterion_9_leakage_guards(verdict, monkeypatch):
    fitted = []
    original = harness.zscore_fit_transform

    def recording(train):
        fitted.append(set(train.ids))
        return original(train)

    monkeypatch.setattr(harness, "zscore_fit_transform", recording)
    data = synth_generate(SynthConfig(n_pos=15, n_neg=90, channels=1, length=16, seed=3))
    overrides = {"hidden": [4, 4, 4]}
    configs = [TrainConfig(mode=m, epochs=1, batch_size=64) for m in
               ("plain", "cost_sensitive", "fixed_cost")]
    configs += [TrainConfig(mode="sampled", sampler=SamplerConfig(s), epochs=1, batch_size=64)
                for s in ("ros", "rus", "smote", "adasyn", "tomek", "smote_enn")]
    problems, folds = [], 0
    for cfg in configs:
        fitted.clear()
        report = run_cross_validation(data, "mlp", cfg, k=3, model_overrides=overrides)
        splits = stratified_kfold(data, 3, cfg.seed)
        for fold, split, fit_ids in zip(report.folds, splits, fitted):
            folds += 1
            train_ids = {data.ids[i] for i in split.train_indices}
            val_ids = {data.ids[i] for i in split.validation_indices}
            raw_ir = imbalance_ratio(data.labels[split.validation_indices])
            if fold["validation_ir"] != raw_ir or fold["raw_validation_ir"] != raw_ir:
                problems.append((cfg.mode, fold["fold"], "validation IR"))
            if fit_ids != train_ids or fit_ids & val_ids or fold["stats_fit_size"] != len(train_ids):
                problems.append((cfg.mode, fold["fold"], "normalization provenance"))
    verdict(9, not problems and folds == 3 * len(configs),
            f"{folds} folds over {len(configs)} configurations, problems {problems}")
