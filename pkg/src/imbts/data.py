"""Time-series datasets: CSV I/O, z-scoring, folds, minibatches, synthetic data.

Label 1 is the positive (minority) class, label 0 the negative (majority)
class. CSV files use a wide layout with header
``label,c0_t0,c0_t1,...,c1_t0,...`` and an optional leading ``id`` column.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesSample:
    values: np.ndarray
    label: int
    id: str


@dataclass(frozen=True)
class NormStats:
    """Per-channel z-score parameters and the ids of the rows they came from."""

    mean: np.ndarray
    std: np.ndarray
    fit_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Dataset:
    """A fixed-shape multivariate series collection.

    ``values`` has shape ``(n, channels, length)``; ``labels`` is an int
    array in {0, 1}; ``ids`` gives one string per sample.
    """

    values: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...]
    stats: NormStats | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if values.ndim != 3:
            raise DataError(f"values must be (n, channels, length), got shape {values.shape}")
        if values.shape[1] < 1 or values.shape[2] < 1:
            raise DataError("channels and length must be >= 1")
        if labels.shape != (values.shape[0],):
            raise DataError("labels must align with samples")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if not np.all(np.isfinite(values)):
            raise DataError("values contain non-finite entries")
        if len(self.ids) != values.shape[0]:
            raise DataError("ids must align with samples")
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def channel_count(self) -> int:
        return self.values.shape[1]

    @property
    def length(self) -> int:
        return self.values.shape[2]

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos

    @property
    def samples(self) -> Iterator[TimeSeriesSample]:
        for v, y, i in zip(self.values, self.labels, self.ids):
            yield TimeSeriesSample(v, int(y), i)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(self, values=self.values[idx], labels=self.labels[idx],
                       ids=tuple(self.ids[i] for i in idx))

    def require_both_classes(self) -> None:
        if self.n_pos == 0 or self.n_neg == 0:
            raise DataError(f"dataset needs both classes (n_pos={self.n_pos}, n_neg={self.n_neg})")


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_indices: np.ndarray
    validation_indices: np.ndarray


@dataclass(frozen=True)
class MinibatchPlan:
    batch_size: int
    batches: list[np.ndarray]
    seed: int
    epoch: int = 0


# ---------------------------------------------------------------- CSV I/O

_COLUMN = re.compile(r"^c(\d+)_t(\d+)$")


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_csv`.

    By default the layout is discovered from ``c{ch}_t{t}`` headers; set
    ``channels``/``length`` to assert it.
    """

    label_column: str = "label"
    id_column: str | None = "id"
    channels: int | None = None
    length: int | None = None


def load_csv(path, schema: CsvSchema = CsvSchema()) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        if schema.label_column not in header:
            raise DataError(f"{path}: no {schema.label_column!r} column in header")
        label_pos = header.index(schema.label_column)
        id_pos = header.index(schema.id_column) if schema.id_column in header else None

        cells: dict[tuple[int, int], int] = {}
        for pos, name in enumerate(header):
            m = _COLUMN.match(name)
            if m:
                cells[int(m.group(1)), int(m.group(2))] = pos
        if not cells:
            raise DataError(f"{path}: no c<ch>_t<t> value columns")
        n_ch = max(c for c, _ in cells) + 1
        n_t = max(t for _, t in cells) + 1
        if len(cells) != n_ch * n_t:
            raise DataError(f"{path}: value columns do not form a full channels x length grid")
        if schema.channels is not None and schema.channels != n_ch:
            raise DataError(f"{path}: expected {schema.channels} channels, found {n_ch}")
        if schema.length is not None and schema.length != n_t:
            raise DataError(f"{path}: expected length {schema.length}, found {n_t}")
        order = [cells[c, t] for c in range(n_ch) for t in range(n_t)]

        values, labels, ids = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no}: expected {len(header)} cells, got {len(row)}")
            raw_label = row[label_pos].strip()
            if raw_label not in ("0", "1"):
                raise DataError(f"{path}: row {row_no}: label {raw_label!r} is not 0 or 1")
            try:
                vals = [float(row[p]) for p in order]
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: row {row_no}: non-finite value")
            values.append(vals)
            labels.append(int(raw_label))
            ids.append(row[id_pos] if id_pos is not None else str(row_no - 2))
    arr = np.asarray(values, dtype=np.float64).reshape(len(values), n_ch, n_t)
    return Dataset(arr, np.asarray(labels, dtype=np.int64), tuple(ids))


def write_csv(data: Dataset, path) -> Path:
    """Write ``data`` in the wide layout; ``repr`` floats reload bit-exactly."""
    path = Path(path)
    c, l = data.channel_count, data.length
    header = ["id", "label"] + [f"c{ch}_t{t}" for ch in range(c) for t in range(l)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for sample_id, y, v in zip(data.ids, data.labels, data.values):
            w.writerow([sample_id, int(y)] + [repr(float(x)) for x in v.ravel()])
    return path


# ------------------------------------------------------------ normalization

def zscore_fit_transform(train: Dataset) -> tuple[Dataset, NormStats]:
    if len(train) == 0:
        raise DataError("cannot fit normalization on an empty dataset")
    v = train.values
    constant = v.max(axis=(0, 2)) == v.min(axis=(0, 2))
    # constant channels pass through: mean 0, std 1
    mean = np.where(constant, 0.0, v.mean(axis=(0, 2)))
    std = np.where(constant, 1.0, v.std(axis=(0, 2)))
    stats = NormStats(mean, std, tuple(train.ids))
    return zscore_apply(train, stats), stats


def zscore_apply(data: Dataset, stats: NormStats) -> Dataset:
    out = (data.values - stats.mean[None, :, None]) / stats.std[None, :, None]
    return replace(data, values=out, stats=stats)


# ---------------------------------------------------------------- imbalance

def imbalance_ratio(data: Dataset | np.ndarray) -> float:
    """Negatives per positive (``n_neg / n_pos``)."""
    labels = data.labels if isinstance(data, Dataset) else np.asarray(data)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError(f"imbalance ratio needs both classes (n_pos={n_pos}, n_neg={n_neg})")
    return n_neg / n_pos


# ------------------------------------------------------------------- splits

def stratified_kfold(data: Dataset | np.ndarray, k: int, seed: int) -> list[FoldSplit]:
    """Shuffle each class, then deal its members round-robin over ``k`` folds."""
    labels = data.labels if isinstance(data, Dataset) else np.asarray(data)
    if k < 2:
        raise DataError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for cls in (1, 0):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            raise DataError(f"class {cls} has {len(members)} members, fewer than k={k}")
        members = rng.permutation(members)
        # continue dealing where the previous class stopped so fold sizes stay even
        fold_of[members] = (np.arange(len(members)) + offset) % k
        offset = (offset + len(members)) % k
    everything = np.arange(len(labels))
    return [FoldSplit(f, everything[fold_of != f], everything[fold_of == f]) for f in range(k)]


def shuffled_minibatches(n: int, batch_size: int, seed: int, epoch: int = 0) -> MinibatchPlan:
    if n < 1 or batch_size < 1:
        raise DataError("n and batch_size must be >= 1")
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    batches = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    return MinibatchPlan(batch_size, batches, seed, epoch)


# ---------------------------------------------------------------- synthetic

@dataclass(frozen=True)
class SynthConfig:
    n_pos: int = 100
    n_neg: int = 2000
    channels: int = 3
    length: int = 64
    noise_std: float = 1.0
    burst_amplitude: float = 2.5
    burst_width: int = 16
    burst_period: float = 8.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_pos", "n_neg", "channels", "length", "burst_width"):
            if getattr(self, name) < 1:
                raise DataError(f"synth config: {name} must be >= 1")
        if self.noise_std < 0:
            raise DataError("synth config: noise_std must be >= 0")


def synth_generate(config: SynthConfig = SynthConfig(), **overrides) -> Dataset:
    """Gaussian-noise negatives; positives add a Hann-windowed sinusoid burst.

    Each positive gets its own onset and phase; the burst is added to every
    channel. Positives come first, then negatives.
    """
    cfg = replace(config, **overrides) if overrides else config
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_pos + cfg.n_neg
    values = rng.normal(0.0, 1.0, size=(n, cfg.channels, cfg.length)) * cfg.noise_std
    width = min(cfg.burst_width, cfg.length)
    window = np.hanning(width + 2)[1:-1]
    t = np.arange(width)
    for i in range(cfg.n_pos):
        onset = rng.integers(0, cfg.length - width + 1)
        phase = rng.uniform(0.0, 2 * np.pi)
        burst = cfg.burst_amplitude * window * np.sin(2 * np.pi * t / cfg.burst_period + phase)
        if not np.any(burst):
            burst = cfg.burst_amplitude * window
        values[i, :, onset:onset + width] += burst[None, :]
    labels = np.r_[np.ones(cfg.n_pos, dtype=np.int64), np.zeros(cfg.n_neg, dtype=np.int64)]
    ids = tuple(f"s{i}" for i in range(n))
    return Dataset(values, labels, ids)
