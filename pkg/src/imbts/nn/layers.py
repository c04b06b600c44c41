"""Parameterised layers and the :class:`LayerConfig` vocabulary."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import functional as F
from .tensor import DTYPE, Tensor

LAYER_KINDS = (
    "conv1d", "max_pool1d", "global_avg_pool1d", "batch_norm1d", "relu",
    "dropout", "dense", "sigmoid", "lstm", "residual_add", "concat", "flatten",
)


@dataclass(frozen=True)
class LayerConfig:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        for key in ("filters", "kernel_size", "stride", "pool", "units", "hidden"):
            value = self.params.get(key)
            if value is not None and int(value) < 1:
                raise ValueError(f"{self.kind}: {key} must be positive, got {value}")
        rate = self.params.get("rate")
        if rate is not None and not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


class Param:
    """A trainable tensor plus its Adam moment accumulators."""

    def __init__(self, value):
        self.value = Tensor(value, requires_grad=True)
        self.first_moment = np.zeros_like(self.value.data)
        self.second_moment = np.zeros_like(self.value.data)
        self.step_count = 0

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self):
        return self.value.grad

    def __repr__(self):
        return f"Param(shape={self.shape}, step_count={self.step_count})"


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    training = True

    def params(self) -> dict[str, Param]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def config(self) -> LayerConfig:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class Conv1d(Layer):
    def __init__(self, in_channels, filters, kernel_size, rng, stride=1, padding="same"):
        self.stride, self.padding = stride, padding
        self.kernels = Param(_he_uniform(rng, (filters, in_channels, kernel_size),
                                         in_channels * kernel_size))
        self.bias = Param(np.zeros(filters))

    def params(self):
        return {"kernels": self.kernels, "bias": self.bias}

    def config(self):
        f, _, k = self.kernels.shape
        return LayerConfig("conv1d", {"filters": f, "kernel_size": k, "stride": self.stride,
                                      "padding": self.padding})

    def __call__(self, x):
        return F.conv1d(x, self.kernels.value, self.bias.value, self.stride, self.padding)


class Dense(Layer):
    def __init__(self, in_features, units, rng):
        self.weights = Param(_he_uniform(rng, (in_features, units), in_features))
        self.bias = Param(np.zeros(units))

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def config(self):
        return LayerConfig("dense", {"units": self.weights.shape[1]})

    def __call__(self, x):
        return F.dense(x, self.weights.value, self.bias.value)


class BatchNorm1d(Layer):
    def __init__(self, channels, momentum=0.9, eps=1e-5):
        self.momentum, self.eps = momentum, eps
        self.gamma = Param(np.ones(channels))
        self.beta = Param(np.zeros(channels))
        self.running_mean = np.zeros(channels, dtype=DTYPE)
        self.running_var = np.ones(channels, dtype=DTYPE)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def config(self):
        return LayerConfig("batch_norm1d", {"momentum": self.momentum, "epsilon": self.eps})

    def __call__(self, x):
        return F.batch_norm1d(x, self.gamma.value, self.beta.value, self.running_mean,
                              self.running_var, self.training, self.momentum, self.eps)


class LSTM(Layer):
    def __init__(self, in_channels, hidden, rng):
        limit = 1.0 / np.sqrt(hidden)
        self.w_input = Param(rng.uniform(-limit, limit, size=(in_channels, 4 * hidden)))
        self.w_hidden = Param(rng.uniform(-limit, limit, size=(hidden, 4 * hidden)))
        self.bias = Param(np.zeros(4 * hidden))

    def params(self):
        return {"w_input": self.w_input, "w_hidden": self.w_hidden, "bias": self.bias}

    def config(self):
        return LayerConfig("lstm", {"hidden": self.w_hidden.shape[0]})

    def __call__(self, x):
        return F.lstm(x, self.w_input.value, self.w_hidden.value, self.bias.value)


class Dropout(Layer):
    def __init__(self, rate, rng: np.random.Generator):
        LayerConfig("dropout", {"rate": rate})
        self.rate, self.rng = rate, rng

    def config(self):
        return LayerConfig("dropout", {"rate": self.rate})

    def __call__(self, x):
        return F.dropout(x, self.rate, self.training, self.rng)


class MaxPool1d(Layer):
    def __init__(self, pool, stride=None):
        self.pool, self.stride = pool, stride

    def config(self):
        return LayerConfig("max_pool1d", {"pool": self.pool, "stride": self.stride or self.pool})

    def __call__(self, x):
        return F.max_pool1d(x, self.pool, self.stride)


class _Stateless(Layer):
    def __init__(self, kind, fn):
        self.kind, self.fn = kind, fn

    def config(self):
        return LayerConfig(self.kind)

    def __call__(self, x):
        return self.fn(x)


def ReLU():
    return _Stateless("relu", F.relu)


def Sigmoid():
    return _Stateless("sigmoid", F.sigmoid)


def GlobalAvgPool1d():
    return _Stateless("global_avg_pool1d", F.global_avg_pool1d)


def Flatten():
    return _Stateless("flatten", F.flatten)
