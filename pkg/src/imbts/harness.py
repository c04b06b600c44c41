"""Training loop, evaluation, cross-validation and the benchmark matrix.

Training modes:

``plain``
    mean binary cross-entropy.
``sampled``
    ``plain`` on a resampled training split.
``cost_sensitive``
    per batch: forward, batch G-mean/accuracy at the decision threshold,
    cost-weight update, class-balanced weighted loss, Adam step.
``fixed_cost``
    mean cross-entropy with minority instances weighted by the training IR.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from . import __version__
from .costloss import (LambdaState, balanced_loss_from_logits, fixed_cost_matrix,
                       update_lambda, weighted_mean_loss_from_logits)
from .data import (DataError, Dataset, imbalance_ratio, shuffled_minibatches,
                   stratified_kfold, zscore_apply, zscore_fit_transform)
from .metrics import (HEADLINE, aggregate_folds, confusion, is_undefined, metric_record,
                      scalar_metrics)
from .models import Model, build_model, predict
from .nn.functional import sigmoid_array
from .nn.optim import adam_step
from .nn.tensor import Tensor
from .resampling import SamplerConfig, resample_dataset

log = logging.getLogger(__name__)

MODES = ("plain", "sampled", "cost_sensitive", "fixed_cost")
REPORT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "cost_sensitive"
    epochs: int = 10
    batch_size: int = 512
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    threshold: float = 0.5
    sampler: SamplerConfig | None = None
    lambda_assign: str = "minority"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown training mode {self.mode!r}; expected one of {MODES}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if (self.sampler is not None) != (self.mode == "sampled"):
            raise ValueError("a sampler is required for mode 'sampled' and only for it")
        if self.lambda_assign not in ("minority", "literal"):
            raise ValueError(f"unknown lambda_assign {self.lambda_assign!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sampler"] = self.sampler.to_dict() if self.sampler else None
        return d


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)
    batches: list[dict] = field(default_factory=list)
    empty_class_batches: int = 0
    wall_time: float = 0.0

    def lambda_trajectory(self) -> list[dict]:
        return [b for b in self.batches if "lambda_minority" in b]

    def to_dict(self) -> dict:
        return {"epoch_loss": self.epoch_loss, "batches": self.batches,
                "empty_class_batches": self.empty_class_batches, "wall_time": self.wall_time}


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def batch_gmean_acc(labels, probs, threshold: float) -> tuple[float, float]:
    """Batch G-mean (nan if a class is absent) and accuracy of thresholded probs."""
    m = scalar_metrics(confusion(labels, (np.asarray(probs) >= threshold).astype(np.int64)))
    return m["Gmean"], m["ACC"]


def batch_loss_and_grad(logits: np.ndarray, labels: np.ndarray, config: TrainConfig,
                        ir: float, gmean: float | None = None,
                        acc: float | None = None) -> tuple[float, np.ndarray, LambdaState | None]:
    """Loss and d(loss)/d(logit) for one batch under ``config.mode``.

    In cost-sensitive mode ``gmean``/``acc`` are the batch statistics feeding
    the cost weight; they enter as plain numbers, never as graph nodes.
    """
    if config.mode == "cost_sensitive":
        state = update_lambda(ir, gmean, acc, config.lambda_assign)
        loss, grad = balanced_loss_from_logits(logits, labels, state)
        return loss, grad, state
    if config.mode == "fixed_cost":
        cost = fixed_cost_matrix(ir)
        loss, grad = weighted_mean_loss_from_logits(logits, labels, cost[1, 0], cost[0, 0])
        return loss, grad, None
    loss, grad = weighted_mean_loss_from_logits(logits, labels)
    return loss, grad, None


def train(model: Model, train_data: Dataset, config: TrainConfig) -> tuple[Model, TrainLog]:
    start = time.perf_counter()
    n = len(train_data)
    if n == 0:
        raise DataError("empty training set")
    ir = math.nan
    if config.mode in ("cost_sensitive", "fixed_cost"):
        train_data.require_both_classes()
        ir = imbalance_ratio(train_data)
    model.train()
    model.reseed_dropout(derive_seed(config.seed, 7))
    params = list(model.params.values())
    tlog = TrainLog()
    X, y = train_data.values, train_data.labels

    for epoch in range(config.epochs):
        plan = shuffled_minibatches(n, config.batch_size, config.seed, epoch)
        losses, sizes = [], []
        for b, idx in enumerate(plan.batches):
            xb, yb = X[idx], y[idx]
            n_pos = int(yb.sum())
            if n_pos == 0 or n_pos == len(yb):
                tlog.empty_class_batches += 1
            logits = model.logits(Tensor(xb))
            z = logits.data[:, 0]
            record: dict[str, Any] = {"epoch": epoch, "batch": b, "size": len(idx), "n_pos": n_pos}
            gmean = acc = None
            if config.mode == "cost_sensitive":
                gmean, acc = batch_gmean_acc(yb, sigmoid_array(z), config.threshold)
            loss, grad, state = batch_loss_and_grad(z, yb, config, ir, gmean, acc)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            if state is not None:
                record.update(lambda_minority=state.lambda_minority,
                              gmean=None if is_undefined(gmean) else gmean, acc=acc)
            record["loss"] = loss
            model.zero_grad()
            logits.backward(grad[:, None])
            for p in params:
                g = p.value.grad if p.value.grad is not None else np.zeros(p.shape)
                adam_step(p, g, config.lr, config.beta1, config.beta2, config.epsilon)
            tlog.batches.append(record)
            losses.append(loss)
            sizes.append(len(idx))
        tlog.epoch_loss.append(float(np.average(losses, weights=sizes)))
    model.zero_grad()
    tlog.wall_time = time.perf_counter() - start
    return model, tlog


def evaluate(model: Model, data: Dataset, threshold: float = 0.5) -> dict[str, float]:
    model.eval()
    scores, _ = predict(model, data, threshold)
    return metric_record(data.labels, scores, threshold)


# ------------------------------------------------------------ experiments

@dataclass
class ExperimentReport:
    config: dict
    folds: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    error: str | None = None
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"version": REPORT_VERSION, "config": self.config, "folds": self.folds,
                "aggregates": self.aggregates, "environment": self.environment,
                "error": self.error, "wall_time": self.wall_time}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        if d.get("version") != REPORT_VERSION:
            raise ValueError(f"report version {d.get('version')!r}, expected {REPORT_VERSION}")
        return cls(d["config"], d["folds"], d["aggregates"], d["environment"],
                   d.get("error"), d.get("wall_time", 0.0))

    def metric_values(self, name: str) -> list[float]:
        return [math.nan if f["metrics"][name] is None else f["metrics"][name] for f in self.folds]


def _jsonable_metrics(record: dict) -> dict:
    return {k: (None if is_undefined(v) else v) for k, v in record.items()}


def aggregate_records(fold_metrics: list[dict]) -> dict:
    recs = [{k: (math.nan if v is None else v) for k, v in m.items()} for m in fold_metrics]
    return {k: agg.to_dict() for k, agg in aggregate_folds(recs).items()}


def run_fold(data: Dataset, split, model_kind: str, config: TrainConfig,
             model_overrides: dict | None = None) -> dict:
    """Train and evaluate one fold; returns the JSON-ready fold record."""
    fold_seed = derive_seed(config.seed, split.fold_index)
    train_raw = data.subset(split.train_indices)
    val_raw = data.subset(split.validation_indices)
    train_set, stats = zscore_fit_transform(train_raw)
    val_set = zscore_apply(val_raw, stats)
    sampler = None
    if config.mode == "sampled":
        sampler = replace(config.sampler, seed=derive_seed(fold_seed, 11))
        train_set, _ = resample_dataset(train_set, sampler)

    if set(stats.fit_ids) != set(train_raw.ids) or not set(stats.fit_ids).isdisjoint(val_raw.ids):
        raise TrainingError("normalization statistics leaked validation samples")
    if val_set.ids != val_raw.ids or not np.array_equal(val_set.labels, val_raw.labels):
        raise TrainingError("validation split was altered")

    model = build_model(model_kind, (data.channel_count, data.length), model_overrides, fold_seed)
    model, tlog = train(model, train_set, replace(config, seed=fold_seed))
    record = evaluate(model, val_set, config.threshold)
    return {
        "fold": split.fold_index,
        "seed": fold_seed,
        "metrics": _jsonable_metrics(record),
        "train_size": len(train_set),
        "train_ir": imbalance_ratio(train_set) if train_set.n_pos and train_set.n_neg else None,
        "validation_size": len(val_set),
        "validation_ir": imbalance_ratio(val_set),
        "raw_validation_ir": imbalance_ratio(val_raw),
        "stats_fit_size": len(stats.fit_ids),
        "sampler": sampler.to_dict() if sampler else None,
        "epoch_loss": tlog.epoch_loss,
        "empty_class_batches": tlog.empty_class_batches,
        "lambda_trajectory": [
            {k: b[k] for k in ("epoch", "batch", "lambda_minority", "gmean", "acc")}
            for b in tlog.lambda_trajectory()
        ],
        "train_wall_time": tlog.wall_time,
    }


def run_cross_validation(data: Dataset, model_kind: str, config: TrainConfig, k: int = 10,
                         model_overrides: dict | None = None,
                         n_jobs: int = 1) -> ExperimentReport:
    start = time.perf_counter()
    splits = stratified_kfold(data, k, config.seed)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            folds = list(pool.map(
                lambda s: run_fold(data, s, model_kind, config, model_overrides), splits))
    else:
        folds = [run_fold(data, s, model_kind, config, model_overrides) for s in splits]
    report = ExperimentReport(
        config={"model": model_kind, "model_overrides": model_overrides or {},
                "train": config.to_dict(), "folds": k},
        folds=folds,
        aggregates=aggregate_records([f["metrics"] for f in folds]),
        environment={"version": __version__, "seed": config.seed, "n_samples": len(data),
                     "n_pos": data.n_pos, "n_neg": data.n_neg},
    )
    report.wall_time = time.perf_counter() - start
    return report


@dataclass(frozen=True)
class BenchmarkCell:
    index: int
    model_kind: str
    mode: str
    sampler: str | None
    seed: int

    @property
    def label(self) -> str:
        return f"{self.model_kind}/{self.sampler or self.mode}"


def enumerate_cells(model_kinds, modes, samplers, base_seed: int) -> list[BenchmarkCell]:
    cells = []
    for kind in model_kinds:
        for mode in modes:
            variants = list(samplers) if mode == "sampled" else [None]
            for s in variants:
                idx = len(cells)
                cells.append(BenchmarkCell(idx, kind, mode, s, derive_seed(base_seed, idx)))
    return cells


def run_benchmark(data: Dataset, model_kinds, modes, samplers, base_config: TrainConfig,
                  k: int = 10, model_overrides: dict | None = None,
                  sampler_defaults: dict | None = None) -> list[ExperimentReport]:
    """One cross-validated report per matrix cell; failing cells are recorded, not raised."""
    reports = []
    for cell in enumerate_cells(model_kinds, modes, samplers, base_config.seed):
        sampler = SamplerConfig(cell.sampler, **(sampler_defaults or {})) if cell.sampler else None
        try:
            cfg = replace(base_config, mode=cell.mode, sampler=sampler, seed=cell.seed)
            overrides = (model_overrides or {}).get(cell.model_kind)
            rep = run_cross_validation(data, cell.model_kind, cfg, k, overrides)
        except Exception as exc:  # noqa: BLE001 - one failed cell must not stop the matrix
            log.warning("cell %s failed: %s", cell.label, exc)
            rep = ExperimentReport(config={"model": cell.model_kind, "train": {"mode": cell.mode}},
                                   error=f"{type(exc).__name__}: {exc}")
        rep.config["cell"] = {"index": cell.index, "label": cell.label, "sampler": cell.sampler,
                              "mode": cell.mode, "seed": cell.seed}
        reports.append(rep)
    return reports


__all__ = [
    "BenchmarkCell", "ExperimentReport", "HEADLINE", "MODES", "TrainConfig", "TrainLog",
    "TrainingError", "batch_gmean_acc", "batch_loss_and_grad", "derive_seed", "enumerate_cells",
    "evaluate", "run_benchmark", "run_cross_validation", "run_fold", "train",
]
