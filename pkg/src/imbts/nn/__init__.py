"""Minimal float64 neural-network engine: tensors, layers, Adam."""

from . import functional
from .checkpoint import CheckpointError, load_tensors, save_tensors
from .layers import (LSTM, BatchNorm1d, Conv1d, Dense, Dropout, Flatten, GlobalAvgPool1d,
                     Layer, LayerConfig, MaxPool1d, Param, ReLU, Sigmoid)
from .optim import Adam, adam_step
from .tensor import Tensor

__all__ = [
    "Adam", "BatchNorm1d", "CheckpointError", "Conv1d", "Dense", "Dropout", "Flatten",
    "GlobalAvgPool1d", "LSTM", "Layer", "LayerConfig", "MaxPool1d", "Param", "ReLU", "Sigmoid",
    "Tensor", "adam_step", "functional", "load_tensors", "save_tensors",
]
