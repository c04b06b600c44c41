"""The five temporal classifiers: MLP, CNN, FCN, ResNet and LSTM-FCN.

Every model ends in ``dense(1)`` followed by a sigmoid and maps a
``(batch, channels, length)`` input to positive-class probabilities of
shape ``(batch, 1)``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .data import Dataset
from .nn import functional as F
from .nn.checkpoint import load_tensors, save_tensors
from .nn.layers import (LSTM, BatchNorm1d, Conv1d, Dense, Dropout, Flatten,
                        GlobalAvgPool1d, Layer, LayerConfig, MaxPool1d, Param, ReLU)
from .nn.tensor import Tensor, make_result

MODEL_KINDS = ("mlp", "cnn", "fcn", "resnet", "lstm_fcn")

_BN = {"bn_momentum": 0.9, "bn_epsilon": 1e-5}

DEFAULT_HPARAMS: dict[str, dict[str, Any]] = {
    "mlp": {"hidden": [32, 32, 64]},
    "cnn": {"filters": [32, 64, 64], "kernels": [5, 5, 3], "pools": [2, 2, 0],
            "dropout": 0.5, "dense_units": 64},
    "fcn": {"filters": [128, 256, 128], "kernels": [8, 5, 3], **_BN},
    "resnet": {"block_filters": [64, 128, 128], "kernels": [8, 5, 3], **_BN},
    "lstm_fcn": {"filters": [128, 256, 128], "kernels": [8, 5, 3], "lstm_hidden": 8,
                 "lstm_dropout": 0.8, "dimension_shuffle": False, **_BN},
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_shape: tuple[int, int]
    hparams: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "input_shape": list(self.input_shape),
                "hparams": copy.deepcopy(self.hparams), "seed": self.seed}


class _Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class _ResidualBlock:
    def __init__(self, in_ch, filters, kernels, rng, momentum, eps):
        self.body: list[Layer] = []
        ch = in_ch
        for i, k in enumerate(kernels):
            self.body += [Conv1d(ch, filters, k, rng), BatchNorm1d(filters, momentum, eps)]
            if i < len(kernels) - 1:
                self.body.append(ReLU())
            ch = filters
        self.shortcut: list[Layer] = []
        if in_ch != filters:
            self.shortcut = [Conv1d(in_ch, filters, 1, rng), BatchNorm1d(filters, momentum, eps)]

    @property
    def layers(self):
        return self.body + self.shortcut

    def __call__(self, x):
        y = x
        for layer in self.body:
            y = layer(y)
        s = x
        for layer in self.shortcut:
            s = layer(s)
        return F.relu(F.residual_add(y, s))


class Model:
    """A built network: named parameters, train/eval mode, forward pass."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.mode = "train"
        self._rng = np.random.default_rng(spec.seed)
        self._dropout_rng = np.random.default_rng([spec.seed, 1])
        build = getattr(self, f"_build_{spec.kind}")
        build(spec.input_shape[0], spec.input_shape[1], spec.hparams)
        self._named = self._collect()

    # -- construction -------------------------------------------------
    def _conv_stack(self, in_ch, filters, kernels, hp) -> list[Layer]:
        layers: list[Layer] = []
        for f, k in zip(filters, kernels, strict=True):
            layers += [Conv1d(in_ch, f, k, self._rng),
                       BatchNorm1d(f, hp["bn_momentum"], hp["bn_epsilon"]), ReLU()]
            in_ch = f
        layers.append(GlobalAvgPool1d())
        return layers

    def _build_mlp(self, c, length, hp):
        layers: list[Layer] = [Flatten()]
        width = c * length
        for units in hp["hidden"]:
            layers += [Dense(width, units, self._rng), ReLU()]
            width = units
        self.trunk = _Sequential(layers)
        self.head = Dense(width, 1, self._rng)

    def _build_cnn(self, c, length, hp):
        layers: list[Layer] = []
        ch, l = c, length
        for f, k, p in zip(hp["filters"], hp["kernels"], hp["pools"], strict=True):
            layers += [Conv1d(ch, f, k, self._rng), ReLU()]
            ch = f
            if p:
                if p > l:
                    raise ModelError(f"cnn: pool {p} exceeds sequence length {l}")
                layers.append(MaxPool1d(p))
                l = (l - p) // p + 1
        layers.append(Dropout(hp["dropout"], self._dropout_rng))
        layers += [Flatten(), Dense(ch * l, hp["dense_units"], self._rng), ReLU()]
        self.trunk = _Sequential(layers)
        self.head = Dense(hp["dense_units"], 1, self._rng)

    def _build_fcn(self, c, length, hp):
        self.trunk = _Sequential(self._conv_stack(c, hp["filters"], hp["kernels"], hp))
        self.head = Dense(hp["filters"][-1], 1, self._rng)

    def _build_resnet(self, c, length, hp):
        blocks = []
        ch = c
        for f in hp["block_filters"]:
            blocks.append(_ResidualBlock(ch, f, hp["kernels"], self._rng,
                                         hp["bn_momentum"], hp["bn_epsilon"]))
            ch = f
        self.blocks = blocks
        self.trunk = _Sequential(blocks + [GlobalAvgPool1d()])
        self.head = Dense(ch, 1, self._rng)

    def _build_lstm_fcn(self, c, length, hp):
        self.trunk = _Sequential(self._conv_stack(c, hp["filters"], hp["kernels"], hp))
        lstm_in = length if hp["dimension_shuffle"] else c
        self.lstm = LSTM(lstm_in, hp["lstm_hidden"], self._rng)
        self.lstm_dropout = Dropout(hp["lstm_dropout"], self._dropout_rng)
        self.head = Dense(hp["filters"][-1] + hp["lstm_hidden"], 1, self._rng)

    def _layers(self) -> list[tuple[str, Layer]]:
        out: list[tuple[str, Layer]] = []
        for i, item in enumerate(self.trunk.layers):
            if isinstance(item, _ResidualBlock):
                out += [(f"block{i}.{j}", layer) for j, layer in enumerate(item.layers)]
            else:
                out.append((f"trunk.{i}", item))
        if self.spec.kind == "lstm_fcn":
            out += [("lstm", self.lstm), ("lstm_dropout", self.lstm_dropout)]
        out.append(("head", self.head))
        return out

    def _collect(self) -> dict[str, Param]:
        named = {}
        for prefix, layer in self._layers():
            for name, p in layer.params().items():
                named[f"{prefix}.{name}"] = p
        return named

    # -- public surface -----------------------------------------------
    @property
    def params(self) -> dict[str, Param]:
        return self._named

    def parameter_count(self) -> int:
        return int(sum(p.value.data.size for p in self._named.values()))

    def layer_configs(self) -> list[dict]:
        configs = []
        for name, layer in self._layers():
            cfg: LayerConfig = layer.config()
            configs.append({"name": name, **cfg.to_dict()})
        return configs

    def train(self) -> "Model":
        return self._set_mode("train")

    def eval(self) -> "Model":
        return self._set_mode("eval")

    def _set_mode(self, mode):
        self.mode = mode
        for _, layer in self._layers():
            layer.training = mode == "train"
        return self

    def reseed_dropout(self, seed) -> None:
        """Reset the dropout mask stream (shared by all dropout layers)."""
        self._dropout_rng.bit_generator.state = np.random.default_rng(seed).bit_generator.state

    def zero_(self) -> "Model":
        """Set every parameter to zero (test hook)."""
        for p in self._named.values():
            p.value.data[...] = 0.0
        return self

    def zero_grad(self) -> None:
        for p in self._named.values():
            p.value.grad = None

    def _check_input(self, x: Tensor):
        c, l = self.spec.input_shape
        if x.data.ndim != 3 or x.shape[1:] != (c, l):
            raise ModelError(f"expected input (batch, {c}, {l}), got {x.shape}")

    def branch_features(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """LSTM-FCN only: (FCN pooled features, LSTM last hidden state after dropout)."""
        if self.spec.kind != "lstm_fcn":
            raise ModelError("branch_features is only defined for lstm_fcn")
        fcn = self.trunk(x)
        seq = x
        if self.spec.hparams["dimension_shuffle"]:
            seq = _swap(x)
        return fcn, self.lstm_dropout(self.lstm(seq))

    def logits(self, x: Tensor) -> Tensor:
        """Pre-sigmoid head output, shape ``(batch, 1)``."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        self._check_input(x)
        if self.spec.kind == "lstm_fcn":
            feats = F.concat_features(*self.branch_features(x))
        else:
            feats = self.trunk(x)
        return self.head(feats)

    def forward(self, x: Tensor) -> Tensor:
        return F.sigmoid(self.logits(x))

    __call__ = forward

    # -- persistence --------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: p.value.data for name, p in self._named.items()}
        for prefix, layer in self._layers():
            for name, buf in layer.buffers().items():
                arrays[f"{prefix}.{name}"] = buf
        return arrays

    def save(self, path):
        return save_tensors(path, self.state_arrays())

    def load(self, path) -> "Model":
        arrays = load_tensors(path)
        own = self.state_arrays()
        if set(arrays) != set(own):
            raise ModelError("checkpoint names do not match this model")
        for name, target in own.items():
            if arrays[name].shape != target.shape:
                raise ModelError(f"{name}: checkpoint shape {arrays[name].shape} != {target.shape}")
            target[...] = arrays[name]
        return self


def _swap(x: Tensor) -> Tensor:
    return make_result(np.swapaxes(x.data, 1, 2).copy(), (x,),
                       lambda g: (np.swapaxes(g, 1, 2),))


def resolve_hparams(kind: str, overrides: dict | None = None) -> dict[str, Any]:
    if kind not in MODEL_KINDS:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    hp = copy.deepcopy(DEFAULT_HPARAMS[kind])
    for key, value in (overrides or {}).items():
        if key not in hp:
            raise ModelError(f"{kind}: unknown hyperparameter {key!r}")
        hp[key] = copy.deepcopy(value)
    return hp


def build_model(kind: str, input_shape, overrides: dict | None = None, seed: int = 0) -> Model:
    """Build a seeded model and verify its shapes with a dry run."""
    hp = resolve_hparams(kind, overrides)
    c, l = (int(v) for v in input_shape)
    if c < 1 or l < 1:
        raise ModelError(f"input_shape must be positive, got {input_shape}")
    model = Model(ModelSpec(kind, (c, l), hp, seed))
    model.eval()
    try:
        out = model.forward(Tensor(np.zeros((1, c, l))))
    except ValueError as exc:
        raise ModelError(f"{kind}: layers do not chain for input {(c, l)}: {exc}") from exc
    assert out.shape == (1, 1)
    return model.train()


def predict(model: Model, data: Dataset, threshold: float = 0.5,
            batch_size: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Scores and hard labels (``score >= threshold``) in eval mode."""
    if model.mode != "eval":
        raise ModelError("predict requires the model in eval mode")
    scores = np.empty(len(data))
    for start in range(0, len(data), batch_size):
        chunk = data.values[start:start + batch_size]
        scores[start:start + len(chunk)] = model.forward(Tensor(chunk)).data[:, 0]
    return scores, (scores >= threshold).astype(np.int64)
