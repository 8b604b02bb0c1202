"""Exact nearest-neighbor search and class-rebalancing samplers.

All distances are plain Euclidean on the (standardized) feature matrix and
all scans are exhaustive. Neighbor ties are broken by ascending row index.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dataset import LabeledDataset

log = logging.getLogger(__name__)

ORIGINAL = "original"
SYNTHETIC = "synthetic"
REPLICATED = "replicated"

SAMPLER_NAMES = (
    "none",
    "random-under",
    "tomek-under",
    "random-over",
    "smote",
    "borderline-smote",
    "smote-tomek",
)


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    k_smote: int = 5
    m_borderline: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_smote < 1 or self.m_borderline < 1:
            raise SamplerError("neighbor counts must be >= 1")
        if not 0 < self.target_ratio <= 1:
            raise SamplerError("target_ratio must lie in (0, 1]")


@dataclass
class ResampleOutput:
    """A resampled dataset plus provenance for every output row.

    ``parent`` is the input row each output row came from (the seed example
    for synthetic rows). ``neighbor`` is the interpolation partner of a
    synthetic row and -1 elsewhere. ``removed`` indexes rows of the input, or
    of the input followed by the synthetic rows when cleaning ran after
    over-sampling.
    """

    dataset: LabeledDataset
    origin: np.ndarray
    removed: np.ndarray
    seed: int | None
    parent: np.ndarray
    neighbor: np.ndarray
    warning: str | None = None
    info: dict = field(default_factory=dict)

    @property
    def n_added(self) -> int:
        return int((self.origin != ORIGINAL).sum())


# -- kernels ------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _sqdist(X, i, j):
    s = 0.0
    for c in range(X.shape[1]):
        t = X[i, c] - X[j, c]
        s += t * t
    return s


@njit(cache=True, nogil=True)
def _knn_kernel(X, queries, pool, k):
    out = np.full((queries.shape[0], k), -1, dtype=np.int64)
    best = np.empty(k)
    for qi in range(queries.shape[0]):
        q = queries[qi]
        filled = 0
        for pi in range(pool.shape[0]):
            p = pool[pi]
            if p == q:
                continue
            dist = _sqdist(X, q, p)
            if filled == k and dist >= best[k - 1]:
                continue
            # pool is scanned in ascending index order, so an equal distance
            # never displaces an earlier row
            pos = filled if filled < k else k - 1
            while pos > 0 and best[pos - 1] > dist:
                best[pos] = best[pos - 1]
                out[qi, pos] = out[qi, pos - 1]
                pos -= 1
            best[pos] = dist
            out[qi, pos] = p
            if filled < k:
                filled += 1
    return out


@njit(cache=True, nogil=True)
def _nearest_kernel(X):
    """Squared distance to, index of, and tie count of each row's nearest other row."""
    n = X.shape[0]
    nn = np.full(n, np.inf)
    arg = np.full(n, -1, dtype=np.int64)
    ties = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            dist = _sqdist(X, i, j)
            if dist < nn[i]:
                nn[i] = dist
                arg[i] = j
                ties[i] = 1
            elif dist == nn[i]:
                ties[i] += 1
            if dist < nn[j]:
                nn[j] = dist
                arg[j] = i
                ties[j] = 1
            elif dist == nn[j]:
                ties[j] += 1
    return nn, arg, ties


@njit(cache=True, nogil=True)
def _tomek_kernel(X, y):
    nn, arg, ties = _nearest_kernel(X)
    n = X.shape[0]
    left = np.empty(n * 2, dtype=np.int64)
    right = np.empty(n * 2, dtype=np.int64)
    count = 0
    for i in range(n):
        if ties[i] == 1:
            j = arg[i]
            if j > i and y[i] != y[j] and nn[j] == nn[i]:
                if count == left.shape[0]:
                    left = np.concatenate((left, np.empty(n, dtype=np.int64)))
                    right = np.concatenate((right, np.empty(n, dtype=np.int64)))
                left[count] = i
                right[count] = j
                count += 1
        elif ties[i] > 1:
            for j in range(i + 1, n):
                if y[i] == y[j]:
                    continue
                dist = _sqdist(X, i, j)
                if dist == nn[i] and dist == nn[j]:
                    if count == left.shape[0]:
                        left = np.concatenate((left, np.empty(n, dtype=np.int64)))
                        right = np.concatenate((right, np.empty(n, dtype=np.int64)))
                    left[count] = i
                    right[count] = j
                    count += 1
    return left[:count], right[:count]


# -- neighbor queries ---------------------------------------------------------

def knn_batch(queries, pool, features, k: int) -> np.ndarray:
    """k nearest pool rows for each query row, padded with -1 when the pool runs short.

    A query that is itself in the pool never counts as its own neighbor.
    """
    if k < 1:
        raise SamplerError("k must be >= 1")
    X = np.ascontiguousarray(features, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.int64).reshape(-1)
    pool = np.unique(np.asarray(pool, dtype=np.int64))
    if len(pool) == 0:
        raise SamplerError("empty neighbor pool")
    return _knn_kernel(X, queries, pool, int(k))


def knn(query_index: int, pool, features, k: int) -> list[int]:
    """The k pool members nearest to row ``query_index``, closest first."""
    pool = np.unique(np.asarray(pool, dtype=np.int64))
    if len(pool[pool != query_index]) == 0:
        raise SamplerError("empty neighbor pool after excluding the query")
    row = knn_batch([query_index], pool, features, k)[0]
    return [int(i) for i in row if i >= 0]


def _split_classes(data: LabeledDataset):
    n_neg, n_pos = data.class_counts()
    minority = 1 if n_pos <= n_neg else 0
    min_rows = np.flatnonzero(data.labels == minority)
    maj_rows = np.flatnonzero(data.labels != minority)
    return minority, min_rows, maj_rows


def borderline_classify(data: LabeledDataset, m: int) -> dict[str, np.ndarray]:
    """Partition minority rows into safe, danger and noise.

    With ``s`` the number of majority rows among a minority row's ``m``
    nearest neighbors over the whole set: noise if ``s == m``, danger if
    ``m/2 <= s < m``, safe otherwise.
    """
    if m < 1:
        raise SamplerError("m must be >= 1")
    minority, min_rows, maj_rows = _split_classes(data)
    if len(min_rows) == 0 or len(maj_rows) == 0:
        raise SamplerError("both classes must be present")
    if data.n - 1 < m:
        raise SamplerError(f"need at least {m} other rows, have {data.n - 1}")
    nbrs = knn_batch(min_rows, np.arange(data.n), data.features, m)
    n_maj = (data.labels[nbrs] != minority).sum(axis=1)
    noise = n_maj == m
    danger = ~noise & (2 * n_maj >= m)
    safe = 2 * n_maj < m
    return {"safe": min_rows[safe], "danger": min_rows[danger], "noise": min_rows[noise]}


def tomek_links(data: LabeledDataset) -> set[tuple[int, int]]:
    """Cross-class pairs (i, j), i < j, that are each other's nearest neighbors.

    A pair is a link when no third row is strictly closer to either member
    than they are to each other; exact ties with a third row do not break it.
    """
    left, right = _tomek_kernel(data.features, data.labels)
    return {(int(a), int(b)) for a, b in zip(left, right)}


# -- samplers -----------------------------------------------------------------

def _unchanged(data, seed, warning=None) -> ResampleOutput:
    n = data.n
    return ResampleOutput(
        dataset=data,
        origin=np.full(n, ORIGINAL, dtype=object),
        removed=np.zeros(0, dtype=np.int64),
        seed=seed,
        parent=np.arange(n),
        neighbor=np.full(n, -1),
        warning=warning,
    )


def _append(data, rows_X, rows_y, origin_tag, parent, neighbor, seed, **info) -> ResampleOutput:
    n = data.n
    X = np.vstack([data.features, rows_X]) if len(rows_X) else data.features
    y = np.concatenate([data.labels, rows_y])
    out = LabeledDataset(X, y, data.feature_names, data.encoding)
    origin = np.concatenate([np.full(n, ORIGINAL, dtype=object),
                             np.full(len(rows_y), origin_tag, dtype=object)])
    return ResampleOutput(
        dataset=out,
        origin=origin,
        removed=np.zeros(0, dtype=np.int64),
        seed=seed,
        parent=np.concatenate([np.arange(n), parent]).astype(np.int64),
        neighbor=np.concatenate([np.full(n, -1), neighbor]).astype(np.int64),
        info=info,
    )


def _drop(res: ResampleOutput, removed: np.ndarray) -> ResampleOutput:
    removed = np.unique(np.asarray(removed, dtype=np.int64))
    keep = np.ones(res.dataset.n, dtype=bool)
    keep[removed] = False
    data = res.dataset
    ids = None if data.customer_ids is None else data.customer_ids[keep]
    out = LabeledDataset(data.features[keep], data.labels[keep], data.feature_names,
                         data.encoding, ids)
    return ResampleOutput(out, res.origin[keep], removed, res.seed, res.parent[keep],
                          res.neighbor[keep], res.warning, dict(res.info))


def required_synthetic(n_min: int, n_maj: int, ratio: float) -> int:
    """Rows to add so that minority / majority reaches ``ratio`` (rounded half up)."""
    return math.floor(ratio * n_maj + 0.5) - n_min


def _interpolate(data, seeds, pool, n_new, k, seed):
    """SMOTE generation from ``seeds`` toward their k nearest ``pool`` rows.

    With T seeds, each seed gets floor(n_new / T) children and the remainder
    goes one each to seeds picked uniformly without replacement; when
    n_new < T that is the only allocation. Neighbors are drawn without
    replacement unless a seed needs more children than it has neighbors.
    """
    X = data.features
    T = len(seeds)
    base, extra = divmod(n_new, T)
    counts = np.full(T, base, dtype=np.int64)
    if extra:
        chosen = np.random.default_rng([seed, 0]).choice(T, size=extra, replace=False)
        counts[chosen] += 1
    nbrs = knn_batch(seeds, pool, X, k)

    new_X = np.empty((n_new, X.shape[1]))
    parent = np.empty(n_new, dtype=np.int64)
    partner = np.empty(n_new, dtype=np.int64)
    at = 0
    for qi, c in enumerate(counts):
        if c == 0:
            continue
        s = seeds[qi]
        # per-seed stream: independent of evaluation order
        rng = np.random.default_rng([seed, 1, int(s)])
        cand = nbrs[qi][nbrs[qi] >= 0]
        picks = rng.choice(cand, size=c, replace=bool(c > len(cand)))
        alpha = rng.random(c)
        new_X[at:at + c] = X[s] + alpha[:, None] * (X[picks] - X[s])
        parent[at:at + c] = s
        partner[at:at + c] = picks
        at += c
    return new_X, parent, partner, base


def smote(data: LabeledDataset, cfg: SamplerConfig = SamplerConfig()) -> ResampleOutput:
    """Synthetic minority over-sampling up to ``cfg.target_ratio``."""
    minority, min_rows, maj_rows = _split_classes(data)
    if len(min_rows) < 2:
        raise SamplerError("SMOTE needs at least 2 minority rows")
    n_new = required_synthetic(len(min_rows), len(maj_rows), cfg.target_ratio)
    if n_new <= 0:
        return _unchanged(data, cfg.seed)
    new_X, parent, partner, base = _interpolate(data, min_rows, min_rows, n_new, cfg.k_smote, cfg.seed)
    y = np.full(n_new, minority, dtype=np.int64)
    return _append(data, new_X, y, SYNTHETIC, parent, partner, cfg.seed,
                   n_synthetic=n_new, per_seed=base, n_seeds=len(min_rows))


def borderline_smote(data: LabeledDataset, cfg: SamplerConfig = SamplerConfig()) -> ResampleOutput:
    """SMOTE seeded only from danger examples; neighbors still come from the whole minority class."""
    minority, min_rows, maj_rows = _split_classes(data)
    if len(min_rows) < 2:
        raise SamplerError("Borderline-SMOTE needs at least 2 minority rows")
    n_new = required_synthetic(len(min_rows), len(maj_rows), cfg.target_ratio)
    if n_new <= 0:
        return _unchanged(data, cfg.seed)
    parts = borderline_classify(data, cfg.m_borderline)
    danger = parts["danger"]
    if len(danger) == 0:
        msg = "no danger examples; nothing synthesized"
        log.warning(msg)
        return _unchanged(data, cfg.seed, warning=msg)
    new_X, parent, partner, base = _interpolate(data, danger, min_rows, n_new, cfg.k_smote, cfg.seed)
    y = np.full(n_new, minority, dtype=np.int64)
    return _append(data, new_X, y, SYNTHETIC, parent, partner, cfg.seed,
                   n_synthetic=n_new, per_seed=base, n_seeds=len(danger),
                   n_safe=len(parts["safe"]), n_danger=len(danger), n_noise=len(parts["noise"]))


def smote_tomek(data: LabeledDataset, cfg: SamplerConfig = SamplerConfig()) -> ResampleOutput:
    """SMOTE, then drop both endpoints of every Tomek link in the augmented set."""
    res = smote(data, cfg)
    links = tomek_links(res.dataset)
    removed = sorted({i for pair in links for i in pair})
    out = _drop(res, removed)
    out.info["n_links"] = len(links)
    return out


def tomek_under(data: LabeledDataset, cfg: SamplerConfig | None = None) -> ResampleOutput:
    """Drop the majority endpoint of every Tomek link."""
    _, _, maj_rows = _split_classes(data)
    seed = None if cfg is None else cfg.seed
    links = tomek_links(data)
    majority = set(maj_rows.tolist())
    removed = sorted({i for pair in links for i in pair if i in majority})
    if not removed:
        return _unchanged(data, seed)
    out = _drop(_unchanged(data, seed), removed)
    out.info["n_links"] = len(links)
    return out


def random_under(data: LabeledDataset, cfg: SamplerConfig = SamplerConfig()) -> ResampleOutput:
    _, min_rows, maj_rows = _split_classes(data)
    keep = math.floor(len(min_rows) / cfg.target_ratio + 0.5)
    if len(maj_rows) <= keep:
        return _unchanged(data, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    kept = rng.choice(maj_rows, size=keep, replace=False)
    removed = np.setdiff1d(maj_rows, kept)
    return _drop(_unchanged(data, cfg.seed), removed)


def random_over(data: LabeledDataset, cfg: SamplerConfig = SamplerConfig()) -> ResampleOutput:
    minority, min_rows, maj_rows = _split_classes(data)
    n_new = required_synthetic(len(min_rows), len(maj_rows), cfg.target_ratio)
    if n_new <= 0 or len(min_rows) == 0:
        return _unchanged(data, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    picks = rng.choice(min_rows, size=n_new, replace=True)
    return _append(data, data.features[picks], np.full(n_new, minority, dtype=np.int64),
                   REPLICATED, picks, np.full(n_new, -1), cfg.seed)


def no_sampling(data: LabeledDataset, cfg: SamplerConfig | None = None) -> ResampleOutput:
    return _unchanged(data, None if cfg is None else cfg.seed)


SAMPLERS = {
    "none": no_sampling,
    "random-under": random_under,
    "tomek-under": tomek_under,
    "random-over": random_over,
    "smote": smote,
    "borderline-smote": borderline_smote,
    "smote-tomek": smote_tomek,
}


def resample(name: str, data: LabeledDataset, cfg: SamplerConfig = SamplerConfig()) -> ResampleOutput:
    try:
        fn = SAMPLERS[name]
    except KeyError:
        raise SamplerError(f"unknown sampler {name!r}; choose from {', '.join(SAMPLER_NAMES)}") from None
    return fn(data, cfg)
