"""Over-, under- and combined samplers on flattened series.

All samplers treat label 1 as the minority class and use exact Euclidean
k-nearest neighbours with ties broken towards the lower row index. Every
output row carries its origin: the index of the input row it copies, or the
two parent rows and interpolation gap of a synthetic row.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset

METHODS = ("ros", "rus", "smote", "smote_b1", "smote_b2", "adasyn", "nearmiss1",
           "tomek", "enn", "oss", "ncr", "smote_enn", "smote_tl")

_DEFAULT_K = {"enn": 3, "ncr": 3, "nearmiss1": 3}


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    method: str
    k_neighbors: int | None = None
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise SamplingError(f"unknown sampling method {self.method!r}")
        if self.k_neighbors is not None and self.k_neighbors < 1:
            raise SamplingError("k_neighbors must be >= 1")
        if not self.target_ratio > 0:
            raise SamplingError("target_ratio must be > 0")

    @property
    def k(self) -> int:
        return self.k_neighbors if self.k_neighbors is not None else _DEFAULT_K.get(self.method, 5)

    def to_dict(self) -> dict:
        return {"method": self.method, "k_neighbors": self.k_neighbors,
                "target_ratio": self.target_ratio, "seed": self.seed}


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows, labels and per-row origin.

    ``source[i]`` is the input row that row ``i`` copies or starts from;
    ``partner[i]`` is the second parent of a synthetic row (-1 otherwise);
    ``gap[i]`` is the interpolation coefficient (nan for copies);
    ``synthetic[i]`` is True for any generated row, duplicates included.
    """

    rows: np.ndarray
    labels: np.ndarray
    source: np.ndarray
    partner: np.ndarray
    gap: np.ndarray
    synthetic: np.ndarray

    @classmethod
    def from_arrays(cls, rows, labels) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, None]
        labels = np.asarray(labels, dtype=np.int64)
        n = len(rows)
        if labels.shape != (n,):
            raise SamplingError("labels must align with rows")
        if not np.all(np.isfinite(rows)):
            raise SamplingError("rows must be finite")
        return cls(rows, labels, np.arange(n), np.full(n, -1), np.full(n, np.nan),
                   np.zeros(n, dtype=bool))

    def __len__(self):
        return len(self.rows)

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n_neg(self) -> int:
        return int(np.sum(self.labels == 0))

    def take(self, keep) -> "FeatureMatrix":
        keep = np.asarray(keep)
        return FeatureMatrix(self.rows[keep], self.labels[keep], self.source[keep],
                             self.partner[keep], self.gap[keep], self.synthetic[keep])

    def drop(self, remove) -> "FeatureMatrix":
        mask = np.ones(len(self), dtype=bool)
        mask[np.asarray(sorted(remove), dtype=np.int64)] = False
        return self.take(np.flatnonzero(mask))

    def append(self, rows, labels, source, partner, gap) -> "FeatureMatrix":
        m = len(rows)
        if m == 0:
            return self
        return FeatureMatrix(
            np.vstack([self.rows, rows]), np.r_[self.labels, labels],
            np.r_[self.source, source], np.r_[self.partner, partner],
            np.r_[self.gap, gap], np.r_[self.synthetic, np.ones(m, dtype=bool)])

    def origin_table(self) -> list[dict]:
        out = []
        for s, p, g, syn in zip(self.source, self.partner, self.gap, self.synthetic):
            if not syn:
                out.append({"kind": "original", "index": int(s)})
            elif p < 0:
                out.append({"kind": "duplicate", "index": int(s)})
            else:
                out.append({"kind": "synthetic", "parents": [int(s), int(p)], "gap": float(g)})
        return out


# ------------------------------------------------------------------ k-NN core

def _sq_distances(X: np.ndarray, Q: np.ndarray) -> np.ndarray:
    # explicit differences: duplicates get exactly equal distances
    return ((Q[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)


def knn_indices(X, query, k: int, exclude_self: bool = False, candidates=None) -> np.ndarray:
    """Indices of the ``k`` nearest rows of ``X`` for each query.

    ``query`` is an integer index array into ``X`` when ``exclude_self`` is
    set (the query row itself is skipped), otherwise a float matrix of
    query points or an index array. ``candidates`` restricts the neighbour
    pool to a subset of row indices; returned indices always refer to ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    pool = np.arange(len(X)) if candidates is None else np.asarray(candidates, dtype=np.int64)
    q = np.asarray(query)
    if q.dtype.kind in "iu":
        q_idx = q.astype(np.int64)
        Q = X[q_idx]
    else:
        if exclude_self:
            raise SamplingError("exclude_self needs the query given as row indices")
        Q = q.astype(np.float64)
        if Q.ndim == 1:
            Q = Q[:, None]
        q_idx = None
    available = len(pool) - (1 if exclude_self else 0)
    if k > available or k < 1:
        raise SamplingError(f"k={k} but only {available} neighbours are available")
    out = np.empty((len(Q), k), dtype=np.int64)
    P = X[pool]
    chunk = max(1, 4_000_000 // max(1, P.size))
    for start in range(0, len(Q), chunk):
        d = _sq_distances(P, Q[start:start + chunk])
        if exclude_self:
            qs = q_idx[start:start + chunk]
            d[pool[None, :] == qs[:, None]] = np.inf
        # stable sort keeps lower pool positions first on equal distance
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        out[start:start + chunk] = pool[order]
    return out


# -------------------------------------------------------------- helpers

def _split(fm: FeatureMatrix):
    pos = np.flatnonzero(fm.labels == 1)
    neg = np.flatnonzero(fm.labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise SamplingError("sampler needs both classes present")
    return pos, neg


def _oversample_budget(fm: FeatureMatrix, ratio: float) -> int:
    return max(0, int(round(ratio * fm.n_neg)) - fm.n_pos)


def _interpolate(fm, seeds, partners, gaps, label=1) -> FeatureMatrix:
    a, b = fm.rows[seeds], fm.rows[partners]
    rows = a + gaps[:, None] * (b - a)
    m = len(seeds)
    return fm.append(rows, np.full(m, label), fm.source[seeds], fm.source[partners], gaps)


def _effective_k(k, available, what):
    if available < 1:
        raise SamplingError(f"no {what} neighbours available")
    if k > available:
        warnings.warn(f"k_neighbors={k} reduced to {available} ({what} neighbours available)",
                      stacklevel=3)
        return available
    return k


# ---------------------------------------------------------------- samplers

def random_over_sample(fm: FeatureMatrix, config: SamplerConfig) -> FeatureMatrix:
    pos, _ = _split(fm)
    m = _oversample_budget(fm, config.target_ratio)
    rng = np.random.default_rng(config.seed)
    picks = pos[rng.integers(0, len(pos), size=m)]
    return fm.append(fm.rows[picks], np.ones(m, dtype=np.int64), fm.source[picks],
                     np.full(m, -1), np.full(m, np.nan))


def random_under_sample(fm: FeatureMatrix, config: SamplerConfig) -> FeatureMatrix:
    pos, neg = _split(fm)
    keep_neg = min(len(neg), max(1, int(round(len(pos) / config.target_ratio))))
    rng = np.random.default_rng(config.seed)
    kept = np.sort(rng.choice(neg, size=keep_neg, replace=False))
    return fm.take(np.sort(np.r_[pos, kept]))


def _danger_set(fm, pos, k):
    nn_all = knn_indices(fm.rows, pos, k, exclude_self=True)
    n_maj = (fm.labels[nn_all] == 0).sum(axis=1)
    return (n_maj > k / 2) & (n_maj < k), nn_all


def smote(fm: FeatureMatrix, config: SamplerConfig, variant: str = "plain") -> FeatureMatrix:
    """SMOTE and its borderline-1 / borderline-2 variants."""
    if variant not in ("plain", "borderline1", "borderline2"):
        raise SamplingError(f"unknown SMOTE variant {variant!r}")
    pos, neg = _split(fm)
    m = _oversample_budget(fm, config.target_ratio)
    if m == 0:
        return fm
    rng = np.random.default_rng(config.seed)
    k_min = _effective_k(config.k, len(pos) - 1, "minority")

    seeds_pool = pos
    nn_all = None
    if variant != "plain":
        k_all = _effective_k(config.k, len(fm) - 1, "all-class")
        danger, nn_all = _danger_set(fm, pos, k_all)
        if not danger.any():
            warnings.warn("no borderline (danger) minority points; nothing generated", stacklevel=2)
            return fm
        seeds_pool = pos[danger]
        nn_all = nn_all[danger]

    nn_min = knn_indices(fm.rows, seeds_pool, k_min, exclude_self=True, candidates=pos)
    pick = rng.integers(0, len(seeds_pool), size=m)
    seeds = seeds_pool[pick]
    if variant == "borderline2":
        use_any = rng.random(m) < 0.5
        col_min = rng.integers(0, k_min, size=m)
        col_all = rng.integers(0, nn_all.shape[1], size=m)
        partners = np.where(use_any, nn_all[pick, col_all], nn_min[pick, col_min])
        gaps = np.where(use_any, rng.uniform(0.0, 0.5, size=m), rng.uniform(0.0, 1.0, size=m))
    else:
        partners = nn_min[pick, rng.integers(0, k_min, size=m)]
        gaps = rng.uniform(0.0, 1.0, size=m)
    return _interpolate(fm, seeds, partners, gaps)


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights`` (ties to lower index)."""
    w = np.asarray(weights, dtype=np.float64)
    quota = w / w.sum() * total
    base = np.floor(quota).astype(np.int64)
    rest = total - int(base.sum())
    order = np.argsort(-(quota - base), kind="stable")
    base[order[:rest]] += 1
    return base


def adasyn(fm: FeatureMatrix, config: SamplerConfig) -> FeatureMatrix:
    pos, neg = _split(fm)
    m = _oversample_budget(fm, config.target_ratio)
    if m == 0:
        return fm
    k_all = _effective_k(config.k, len(fm) - 1, "all-class")
    nn_all = knn_indices(fm.rows, pos, k_all, exclude_self=True)
    ratio = (fm.labels[nn_all] == 0).sum(axis=1) / k_all
    if not ratio.any():
        warnings.warn("no minority point has majority neighbours; falling back to SMOTE",
                      stacklevel=2)
        return smote(fm, config, "plain")
    counts = largest_remainder(ratio, m)
    rng = np.random.default_rng(config.seed)
    k_min = _effective_k(config.k, len(pos) - 1, "minority")
    nn_min = knn_indices(fm.rows, pos, k_min, exclude_self=True, candidates=pos)
    seeds_local = np.repeat(np.arange(len(pos)), counts)
    partners = nn_min[seeds_local, rng.integers(0, k_min, size=m)]
    gaps = rng.uniform(0.0, 1.0, size=m)
    return _interpolate(fm, pos[seeds_local], partners, gaps)


def nearmiss1(fm: FeatureMatrix, config: SamplerConfig) -> FeatureMatrix:
    """Keep majority rows closest (mean distance) to their k nearest minority rows."""
    pos, neg = _split(fm)
    keep_n = min(len(neg), max(1, int(round(len(pos) / config.target_ratio))))
    k = _effective_k(config.k, len(pos), "minority")
    nn = knn_indices(fm.rows, neg, k, candidates=pos)
    dist = np.sqrt(((fm.rows[neg][:, None, :] - fm.rows[nn]) ** 2).sum(axis=2)).mean(axis=1)
    kept = neg[np.argsort(dist, kind="stable")[:keep_n]]
    return fm.take(np.sort(np.r_[pos, kept]))


def tomek_link_pairs(fm: FeatureMatrix) -> list[tuple[int, int]]:
    """Opposite-class mutual nearest-neighbour pairs ``(i, j)`` with ``i < j``."""
    if len(fm) < 2:
        return []
    nn = knn_indices(fm.rows, np.arange(len(fm)), 1, exclude_self=True)[:, 0]
    pairs = []
    for i, j in enumerate(nn):
        if i < j and nn[j] == i and fm.labels[i] != fm.labels[j]:
            pairs.append((i, int(j)))
    return pairs


def tomek_links(fm: FeatureMatrix, config: SamplerConfig | None = None,
                removable=(0,)) -> FeatureMatrix:
    remove = {i for pair in tomek_link_pairs(fm) for i in pair if fm.labels[i] in removable}
    return fm.drop(remove)


def enn_removals(fm: FeatureMatrix, k: int, removable=(0,)) -> set[int]:
    k = _effective_k(k, len(fm) - 1, "all-class")
    candidates = np.flatnonzero(np.isin(fm.labels, removable))
    if len(candidates) == 0:
        return set()
    nn = knn_indices(fm.rows, candidates, k, exclude_self=True)
    disagree = (fm.labels[nn] != fm.labels[candidates][:, None]).sum(axis=1)
    return set(candidates[disagree > k / 2].tolist())


def enn(fm: FeatureMatrix, config: SamplerConfig, removable=(0,)) -> FeatureMatrix:
    """Single-pass edited nearest neighbours."""
    return fm.drop(enn_removals(fm, config.k, removable))


def oss(fm: FeatureMatrix, config: SamplerConfig) -> FeatureMatrix:
    """One-sided selection: 1-NN condensation, then Tomek-link cleaning."""
    pos, neg = _split(fm)
    rng = np.random.default_rng(config.seed)
    first = int(neg[rng.integers(0, len(neg))])
    store = np.sort(np.r_[pos, first])
    others = np.setdiff1d(neg, [first])
    if len(others):
        nn = knn_indices(fm.rows, others, 1, candidates=store)[:, 0]
        missed = others[fm.labels[nn] != 0]
        store = np.sort(np.r_[store, missed])
    condensed = fm.take(store)
    removed_local = {i for pair in tomek_link_pairs(condensed) for i in pair
                     if condensed.labels[i] == 0}
    keep = [int(store[i]) for i in range(len(store)) if i not in removed_local]
    return fm.take(np.asarray(keep, dtype=np.int64))


def ncr_removals(fm: FeatureMatrix, k: int) -> set[int]:
    remove = enn_removals(fm, k)
    pos, _ = _split(fm)
    k = _effective_k(k, len(fm) - 1, "all-class")
    nn = knn_indices(fm.rows, pos, k, exclude_self=True)
    wrong = (fm.labels[nn] == 0).sum(axis=1) > k / 2
    for row in nn[wrong]:
        remove.update(int(j) for j in row if fm.labels[j] == 0)
    return remove


def ncr(fm: FeatureMatrix, config: SamplerConfig) -> FeatureMatrix:
    """Neighbourhood cleaning rule."""
    return fm.drop(ncr_removals(fm, config.k))


def combined(fm: FeatureMatrix, config: SamplerConfig, cleaner: str) -> FeatureMatrix:
    """Plain SMOTE to ``target_ratio``, then clean rows of either class."""
    smoted = smote(fm, config, "plain")
    if cleaner == "tomek":
        return tomek_links(smoted, removable=(0, 1))
    if cleaner == "enn":
        return enn(smoted, replace(config, method="enn", k_neighbors=3), removable=(0, 1))
    raise SamplingError(f"unknown cleaner {cleaner!r}")


def resample(fm: FeatureMatrix, config: SamplerConfig) -> FeatureMatrix:
    m = config.method
    if m == "ros":
        return random_over_sample(fm, config)
    if m == "rus":
        return random_under_sample(fm, config)
    if m == "smote":
        return smote(fm, config, "plain")
    if m == "smote_b1":
        return smote(fm, config, "borderline1")
    if m == "smote_b2":
        return smote(fm, config, "borderline2")
    if m == "adasyn":
        return adasyn(fm, config)
    if m == "nearmiss1":
        return nearmiss1(fm, config)
    if m == "tomek":
        return tomek_links(fm, config)
    if m == "enn":
        return enn(fm, config)
    if m == "oss":
        return oss(fm, config)
    if m == "ncr":
        return ncr(fm, config)
    if m == "smote_enn":
        return combined(fm, config, "enn")
    if m == "smote_tl":
        return combined(fm, config, "tomek")
    raise SamplingError(f"unknown sampling method {m!r}")


def flatten_dataset(data: Dataset) -> FeatureMatrix:
    return FeatureMatrix.from_arrays(data.values.reshape(len(data), -1), data.labels)


def resample_dataset(data: Dataset, config: SamplerConfig) -> tuple[Dataset, FeatureMatrix]:
    """Resample a normalized dataset; returns the new dataset and the origin record.

    Synthetic samples get ids ``syn<k>``; kept originals keep their ids.
    """
    if config.method not in METHODS:
        raise SamplingError(f"unknown sampling method {config.method!r}")
    if data.stats is None:
        raise SamplingError("resample_dataset expects a normalized dataset (stats set)")
    out = resample(flatten_dataset(data), config)
    values = out.rows.reshape(len(out), data.channel_count, data.length)
    ids = []
    n_syn = 0
    for src, syn in zip(out.source, out.synthetic):
        if syn:
            ids.append(f"syn{n_syn}")
            n_syn += 1
        else:
            ids.append(data.ids[src])
    return Dataset(values, out.labels, tuple(ids), data.stats), out
