"""Gini decision trees, random forest, and the class-weighted (cost-sensitive) variant."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .dataset import LabeledDataset

FORMAT_TAG = "# churnkit forest v1"


class ForestError(ValueError):
    pass


def class_weights(labels, mode: str = "uniform") -> np.ndarray:
    """Per-class weights indexed by label.

    ``balanced`` gives the minority class N_majority / N_minority and the
    majority class 1.
    """
    if mode == "uniform":
        return np.ones(2)
    if mode != "balanced":
        raise ForestError(f"unknown weight mode {mode!r}")
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ForestError("balanced weights need both classes")
    w = np.ones(2)
    if n_pos < n_neg:
        w[1] = n_neg / n_pos
    else:
        w[0] = n_pos / n_neg
    return w


def weighted_gini(class_counts, weights) -> float:
    """1 - sum_c (w_c n_c / S)^2 with S = sum_c w_c n_c."""
    s = np.asarray(class_counts, dtype=float) * np.asarray(weights, dtype=float)
    total = s.sum()
    if total <= 0:
        raise ForestError("gini of an empty node")
    return float(1.0 - ((s / total) ** 2).sum())


# -- kernels ------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _xorshift(state):
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(2685821657736338717)


@njit(cache=True, nogil=True)
def _randbelow(state, n):
    return np.int64((_xorshift(state) >> np.uint64(11)) % np.uint64(n))


@njit(cache=True, nogil=True)
def _best_split(X, y, idx, start, end, f, w0, w1, tot0, tot1):
    """Best midpoint threshold on feature f; returns (score, threshold).

    score = sum_c sL_c^2 / SL + sum_c sR_c^2 / SR, which grows as the weighted
    Gini decrease grows.
    """
    n = end - start
    vals = np.empty(n)
    for t in range(n):
        vals[t] = X[idx[start + t], f]
    order = np.argsort(vals)
    best = -1.0
    thr = 0.0
    l0 = 0.0
    l1 = 0.0
    for t in range(n - 1):
        r = idx[start + order[t]]
        if y[r] == 1:
            l1 += w1
        else:
            l0 += w0
        a = vals[order[t]]
        b = vals[order[t + 1]]
        if a == b:
            continue
        r0 = tot0 - l0
        r1 = tot1 - l1
        sl = l0 + l1
        sr = r0 + r1
        score = (l0 * l0 + l1 * l1) / sl + (r0 * r0 + r1 * r1) / sr
        if score > best:
            best = score
            mid = 0.5 * (a + b)
            thr = mid if mid < b else a
    return best, thr


@njit(cache=True, nogil=True)
def _grow(X, y, sample, w0, w1, n_try, min_split, max_depth, state):
    n = sample.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feat = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, 2))
    size = np.zeros(cap, dtype=np.int64)

    idx = sample.copy()
    perm = np.arange(d)
    # stack rows: start, end, depth, parent, side (0 left, 1 right, -1 root)
    stack = np.empty((cap, 5), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = -1
    top = 1
    count = 0
    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        side = stack[top, 4]
        node = count
        count += 1
        if parent >= 0:
            if side == 0:
                left[parent] = node
            else:
                right[parent] = node

        c0 = 0.0
        c1 = 0.0
        for t in range(start, end):
            if y[idx[t]] == 1:
                c1 += w1
            else:
                c0 += w0
        value[node, 0] = c0
        value[node, 1] = c1
        size[node] = end - start
        if end - start < min_split or c0 == 0.0 or c1 == 0.0:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        parent_score = (c0 * c0 + c1 * c1) / (c0 + c1)
        tol = 1e-12 * (c0 + c1)
        best = -1.0
        best_f = -1
        best_thr = 0.0
        # Fisher-Yates over the feature list; keep drawing past n_try only
        # while nothing drawn so far improves on the parent.
        for t in range(d):
            j = t + _randbelow(state, d - t)
            tmp = perm[t]
            perm[t] = perm[j]
            perm[j] = tmp
            f = perm[t]
            score, cut = _best_split(X, y, idx, start, end, f, w0, w1, c0, c1)
            if score > best:
                best = score
                best_f = f
                best_thr = cut
            if t + 1 >= n_try and best - parent_score > tol:
                break
        if best_f < 0 or best - parent_score <= tol:
            continue

        # partition idx[start:end] on x <= threshold
        i = start
        k = end - 1
        while i <= k:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[k]
                idx[k] = tmp
                k -= 1
        feat[node] = best_f
        thr[node] = best_thr
        # right pushed first so the left subtree is numbered first (pre-order)
        stack[top, 0] = i
        stack[top, 1] = end
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 1
        top += 1
        stack[top, 0] = start
        stack[top, 1] = i
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 0
        top += 1
    return feat[:count], thr[:count], left[:count], right[:count], value[:count], size[:count]


@njit(cache=True, nogil=True)
def _apply(X, feat, thr, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feat[node] >= 0:
            if X[r, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


# -- trees --------------------------------------------------------------------

@dataclass
class Tree:
    """Flat binary tree with nodes numbered in pre-order.

    Internal nodes have ``feature >= 0`` and send x left iff
    ``x[feature] <= threshold``. ``value`` holds weighted class counts.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def vote(self, X) -> np.ndarray:
        """Majority class of the leaf each row lands in; ties go to class 0."""
        v = self.value[self.apply(X)]
        return (v[:, 1] > v[:, 0]).astype(np.int64)

    def paths(self):
        """Yield every root-to-leaf path as a list of node ids."""
        stack = [[0]]
        while stack:
            path = stack.pop()
            node = path[-1]
            if self.is_leaf(node):
                yield path
            else:
                stack.append(path + [int(self.right[node])])
                stack.append(path + [int(self.left[node])])


def grow_tree(X, y, weights=(1.0, 1.0), features_per_split: int | None = None, seed: int = 0,
              sample=None, min_samples_split: int = 2, max_depth: int | None = None) -> Tree:
    """Grow one unpruned Gini tree on ``X[sample]``.

    At each node ``features_per_split`` features are drawn without
    replacement and every midpoint between consecutive distinct values is a
    candidate threshold. If none of the drawn features gives a positive
    weighted-Gini decrease, further features are drawn one at a time. A node
    becomes a leaf when it is pure, holds fewer than ``min_samples_split``
    rows, or no feature splits it with positive decrease.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ForestError("cannot grow a tree on an empty sample")
    d = X.shape[1]
    n_try = d if features_per_split is None else int(features_per_split)
    if not 1 <= n_try <= max(d, 1):
        raise ForestError(f"features_per_split must lie in [1, {d}]")
    sample = np.arange(len(y)) if sample is None else np.asarray(sample, dtype=np.int64)
    w = np.asarray(weights, dtype=float)
    state = np.array([_tree_state(seed)], dtype=np.uint64)
    depth = -1 if max_depth is None else int(max_depth)
    return Tree(*_grow(X, y, sample, float(w[0]), float(w[1]), n_try,
                       int(min_samples_split), depth, state))


def _tree_state(seed) -> int:
    s = int(np.random.SeedSequence(seed).generate_state(1, dtype=np.uint64)[0])
    return s or 0x9E3779B97F4A7C15


def bootstrap_indices(n: int, seed: int, tree_index: int) -> np.ndarray:
    """The in-bag rows (n draws with replacement) of tree ``tree_index``."""
    return np.random.default_rng([seed, tree_index, 0]).integers(0, n, size=n)


# -- forest -------------------------------------------------------------------

@dataclass
class ForestModel:
    trees: list[Tree]
    class_weights: np.ndarray
    features_per_split: int
    seed: int
    n_features: int
    min_samples_split: int = 2
    max_depth: int | None = None
    oob_info: dict | None = field(default=None, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X) -> np.ndarray:
        """Per-row tree vote counts, shape (n, 2)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ForestError(f"expected {self.n_features} features, got {X.shape[1]}")
        ones = np.zeros(len(X), dtype=np.int64)
        for tree in self.trees:
            ones += tree.vote(X)
        return np.column_stack([self.n_trees - ones, ones])

    def scores(self, X) -> np.ndarray:
        """Weighted vote: class weight times the number of trees voting for the class."""
        return self.votes(X) * self.class_weights

    def predict(self, X) -> np.ndarray:
        s = self.scores(X)
        return (s[:, 1] > s[:, 0]).astype(np.int64)

    def save(self, path) -> None:
        save_forest(self, path)


def train_forest(data: LabeledDataset, n_trees: int = 100, weights="uniform",
                 features_per_split: int | None = None, seed: int = 0,
                 min_samples_split: int = 2, max_depth: int | None = None,
                 n_jobs: int = 1) -> ForestModel:
    """Bagged ensemble of Gini trees.

    ``weights`` is ``"uniform"``, ``"balanced"`` or an explicit pair; the
    weights enter the split criterion and the final vote, not the bootstrap.
    Tree ``t`` depends only on ``(data, seed, t)``, so ``n_jobs`` never
    changes the model.
    """
    if n_trees < 1:
        raise ForestError("n_trees must be >= 1")
    if data.n == 0:
        raise ForestError("cannot train on an empty dataset")
    w = class_weights(data.labels, weights) if isinstance(weights, str) else np.asarray(weights, float)
    if w.shape != (2,) or (w <= 0).any():
        raise ForestError("class weights must be two positive numbers")
    d = data.d
    fps = max(1, math.ceil(math.sqrt(d))) if features_per_split is None else int(features_per_split)
    if not 1 <= fps <= d:
        raise ForestError(f"features_per_split must lie in [1, {d}]")

    def build(t):
        sample = bootstrap_indices(data.n, seed, t)
        return grow_tree(data.features, data.labels, w, fps, seed=[seed, t, 1], sample=sample,
                         min_samples_split=min_samples_split, max_depth=max_depth)

    if n_jobs == 1:
        trees = [build(t) for t in range(n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(build, range(n_trees)))
    return ForestModel(trees, w, fps, seed, d, min_samples_split, max_depth)


def predict(model: ForestModel, x) -> tuple[int, np.ndarray]:
    """Class and per-class weighted score for one feature vector; score ties go to class 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ForestError("predict takes a single feature vector")
    s = model.scores(x)[0]
    return int(s[1] > s[0]), s


# -- persistence --------------------------------------------------------------

def save_forest(model: ForestModel, path) -> None:
    """Write a self-describing text file: header, then pre-order node records per tree.

    Node records are ``I <feature> <threshold>`` or ``L <count0> <count1>``;
    floats use ``repr`` so a reload is exact.
    """
    lines = [
        FORMAT_TAG,
        f"n_trees {model.n_trees}",
        f"n_features {model.n_features}",
        f"class_weights {float(model.class_weights[0])!r} {float(model.class_weights[1])!r}",
        f"seed {model.seed}",
        f"features_per_split {model.features_per_split}",
        f"min_samples_split {model.min_samples_split}",
        f"max_depth {-1 if model.max_depth is None else model.max_depth}",
    ]
    for t, tree in enumerate(model.trees):
        lines.append(f"tree {t} {tree.n_nodes}")
        for node in range(tree.n_nodes):
            if tree.feature[node] >= 0:
                lines.append(f"I {tree.feature[node]} {float(tree.threshold[node])!r}")
            else:
                lines.append(f"L {float(tree.value[node, 0])!r} {float(tree.value[node, 1])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_tree(records) -> Tree:
    n = len(records)
    feat = np.full(n, -1, dtype=np.int64)
    thr = np.zeros(n)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    value = np.zeros((n, 2))
    open_nodes = []  # internal nodes still missing a child
    for node, (kind, a, b) in enumerate(records):
        if open_nodes:
            parent = open_nodes[-1]
            if left[parent] < 0:
                left[parent] = node
            else:
                right[parent] = node
                open_nodes.pop()
        elif node:
            raise ForestError("node records continue past a complete tree")
        if kind == "I":
            feat[node] = int(a)
            thr[node] = float(b)
            open_nodes.append(node)
        elif kind == "L":
            value[node] = float(a), float(b)
        else:
            raise ForestError(f"bad node record {kind!r}")
    if open_nodes:
        raise ForestError("truncated tree")
    return Tree(feat, thr, left, right, value)


def load_forest(path) -> ForestModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != FORMAT_TAG:
        raise ForestError(f"{path}: not a forest file")
    header = {}
    at = 1
    while at < len(lines) and not lines[at].startswith("tree "):
        key, _, rest = lines[at].partition(" ")
        header[key] = rest
        at += 1
    trees = []
    while at < len(lines):
        _, _, count = lines[at].split()
        count = int(count)
        records = [lines[at + 1 + i].split() for i in range(count)]
        trees.append(_parse_tree(records))
        at += 1 + count
    if len(trees) != int(header["n_trees"]):
        raise ForestError("tree count does not match header")
    depth = int(header["max_depth"])
    return ForestModel(
        trees=trees,
        class_weights=np.array([float(v) for v in header["class_weights"].split()]),
        features_per_split=int(header["features_per_split"]),
        seed=int(header["seed"]),
        n_features=int(header["n_features"]),
        min_samples_split=int(header["min_samples_split"]),
        max_depth=None if depth < 0 else depth,
    )
