"""Adaptive misclassification-cost weighting and the losses built on it.

The per-batch minority weight is

    lambda_minority = IR * exp(-gmean_batch / 2) * exp(-acc_batch / 2)

with the majority weight fixed at 1. It is recomputed from the current
minibatch predictions and always enters the loss as a constant, so no
gradient flows into the batch statistics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .nn.functional import sigmoid_array

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LambdaState:
    ir_overall: float
    gmean_batch: float
    acc_batch: float
    lambda_minority: float
    lambda_majority: float = 1.0
    # "minority": the IR-scaled weight multiplies positive-instance losses.
    # "literal": it multiplies negative-instance losses instead.
    assign: str = "minority"

    @property
    def weight_pos(self) -> float:
        return self.lambda_minority if self.assign == "minority" else self.lambda_majority

    @property
    def weight_neg(self) -> float:
        return self.lambda_majority if self.assign == "minority" else self.lambda_minority

    @classmethod
    def unit(cls) -> "LambdaState":
        return cls(1.0, math.nan, math.nan, 1.0)


def update_lambda(ir_overall: float, gmean_batch: float | None, acc_batch: float,
                  assign: str = "minority") -> LambdaState:
    """Recompute the cost weight from global IR and batch G-mean / accuracy.

    An undefined batch G-mean (``None`` or nan) counts as 0, which yields the
    largest weight.
    """
    if not ir_overall > 0:
        raise LossError(f"ir_overall must be positive, got {ir_overall}")
    if assign not in ("minority", "literal"):
        raise LossError(f"unknown lambda assignment {assign!r}")
    g = 0.0 if gmean_batch is None or math.isnan(gmean_batch) else float(gmean_batch)
    a = float(acc_batch)
    if not (0.0 <= g <= 1.0 and 0.0 <= a <= 1.0):
        raise LossError(f"batch G-mean and accuracy must lie in [0, 1], got {g}, {a}")
    lam = ir_overall * math.exp(-g / 2.0) * math.exp(-a / 2.0)
    return LambdaState(float(ir_overall), g, a, lam, 1.0, assign)


def weighted_bce(prob, label, state: LambdaState) -> np.ndarray:
    """Per-instance cross-entropy with the positive/negative terms weighted."""
    p = np.clip(np.asarray(prob, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(label)
    return np.where(y == 1, state.weight_pos * -np.log(p), state.weight_neg * -np.log1p(-p))


def class_balanced_loss(losses, labels) -> float:
    """Mean positive-instance loss plus mean negative-instance loss.

    A class missing from the batch contributes zero.
    """
    losses = np.asarray(losses, dtype=np.float64)
    labels = np.asarray(labels)
    if losses.shape != labels.shape:
        raise LossError("losses and labels must align")
    pos, neg = labels == 1, labels == 0
    if not pos.any() and not neg.any():
        raise LossError("batch contains neither class")
    total = 0.0
    for mask, name in ((pos, "positive"), (neg, "negative")):
        if mask.any():
            total += losses[mask].mean()
        else:
            log.debug("batch has no %s instances; its loss term is 0", name)
    return float(total)


def loss_gradient(probs, labels, state: LambdaState) -> np.ndarray:
    """d(class_balanced_loss(weighted_bce(sigmoid(z))))/dz per instance.

    ``probs`` are the sigmoid outputs for logits ``z``.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    g = np.zeros_like(p)
    if n_pos:
        g = np.where(y == 1, state.weight_pos * (p - 1.0) / n_pos, g)
    if n_neg:
        g = np.where(y == 0, state.weight_neg * p / n_neg, g)
    return g


def balanced_loss_from_logits(logits, labels, state: LambdaState) -> tuple[float, np.ndarray]:
    """Loss value and logit gradient for the cost-sensitive objective."""
    p = sigmoid_array(logits)
    return class_balanced_loss(weighted_bce(p, labels, state), labels), loss_gradient(p, labels, state)


def weighted_mean_loss_from_logits(logits, labels, weight_pos: float = 1.0,
                                   weight_neg: float = 1.0) -> tuple[float, np.ndarray]:
    """Plain empirical mean of per-instance weighted cross-entropy and its logit gradient.

    With unit weights this is ordinary mean binary cross-entropy.
    """
    p = sigmoid_array(logits)
    y = np.asarray(labels)
    state = LambdaState(1.0, math.nan, math.nan, weight_pos, weight_neg)
    n = len(y)
    loss = float(weighted_bce(p, y, state).mean())
    w = np.where(y == 1, weight_pos, weight_neg)
    return loss, w * (p - y) / n


@dataclass(frozen=True)
class CostMatrix:
    """``matrix[actual][predicted]`` misclassification costs."""

    matrix: np.ndarray

    def __getitem__(self, key):
        return self.matrix[key]


def fixed_cost_matrix(ir: float) -> CostMatrix:
    if not ir > 0:
        raise LossError(f"ir must be positive, got {ir}")
    return CostMatrix(np.array([[1.0, ir], [ir, 1.0]]))


def expected_risk(posteriors, cost: CostMatrix) -> np.ndarray:
    """Risk of predicting each class: ``R(i) = sum_j P(j) * C[j, i]``."""
    p = np.asarray(posteriors, dtype=np.float64)
    if p.shape != (2,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise LossError(f"posteriors must be a nonnegative pair summing to 1, got {posteriors}")
    return p @ cost.matrix
