"""Multi-output regression trees stored as flat node arrays.

Splits greedily minimize the per-output squared error summed across outputs:
numeric features scan every threshold between distinct sorted values,
categorical features scan one-vs-rest partitions over their codes. Leaves
predict the mean target vector.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

_GAIN_EPS = 1e-12
_NO_SPLIT = (-np.inf, -1, 0.0, False)
_NO_SPLIT_FEATURE = (-np.inf, 0.0, False)


def _node_sse(sum1: np.ndarray, sum2: float, count: int) -> float:
    return sum2 - float(sum1 @ sum1) / count


def best_split_for_feature(
    x: np.ndarray,
    cardinality: int,
    Y: np.ndarray,
    min_leaf: int,
) -> tuple[float, float, bool]:
    """(gain, threshold_or_code, is_categorical) for one feature; gain is
    -inf when no valid split exists."""
    n = len(x)
    tot1 = Y.sum(axis=0)
    tot2 = float((Y * Y).sum())
    parent = _node_sse(tot1, tot2, n)
    if cardinality == 0:
        order = np.argsort(x, kind="stable")
        xs = x[order]
        if xs[0] == xs[-1]:
            return _NO_SPLIT_FEATURE
        ys = Y[order]
        c1 = np.cumsum(ys, axis=0)
        c2 = np.cumsum((ys * ys).sum(axis=1))
        j = np.arange(min_leaf - 1, n - min_leaf)
        if len(j) == 0:
            return _NO_SPLIT_FEATURE
        valid = xs[j] < xs[j + 1]
        if not valid.any():
            return _NO_SPLIT_FEATURE
        j = j[valid]
        nl = (j + 1).astype(np.float64)
        nr = n - nl
        sse_l = c2[j] - (c1[j] ** 2).sum(axis=1) / nl
        sse_r = (tot2 - c2[j]) - ((tot1 - c1[j]) ** 2).sum(axis=1) / nr
        gains = parent - sse_l - sse_r
        b = int(np.argmax(gains))
        thr = 0.5 * (xs[j[b]] + xs[j[b] + 1])
        if thr >= xs[j[b] + 1]:  # midpoint of adjacent floats can round up
            thr = xs[j[b]]
        return float(gains[b]), float(thr), False

    codes = x.astype(np.int64)
    counts = np.bincount(codes, minlength=cardinality).astype(np.float64)
    s1 = np.zeros((cardinality, Y.shape[1]))
    np.add.at(s1, codes, Y)
    s2 = np.bincount(codes, weights=(Y * Y).sum(axis=1), minlength=cardinality)
    ok = (counts >= min_leaf) & (n - counts >= min_leaf)
    if not ok.any():
        return _NO_SPLIT_FEATURE
    cs = np.flatnonzero(ok)
    sse_l = s2[cs] - (s1[cs] ** 2).sum(axis=1) / counts[cs]
    sse_r = (tot2 - s2[cs]) - ((tot1 - s1[cs]) ** 2).sum(axis=1) / (n - counts[cs])
    gains = parent - sse_l - sse_r
    b = int(np.argmax(gains))
    return float(gains[b]), float(cs[b]), True


def best_split(
    X: np.ndarray,
    kinds: tuple[int, ...],
    Y: np.ndarray,
    rows: Optional[np.ndarray] = None,
    min_leaf: int = 1,
    feature_candidates: Optional[np.ndarray] = None,
) -> tuple[float, int, float, bool]:
    """Scan candidate features; returns (gain, feature, threshold, is_cat),
    with feature = -1 when nothing beats a leaf. First feature/threshold in
    scan order wins ties."""
    if rows is None:
        rows = np.arange(len(X))
    Ysub = Y[rows]
    if feature_candidates is None:
        feature_candidates = np.arange(X.shape[1])
    best = _NO_SPLIT
    for f in feature_candidates:
        gain, thr, is_cat = best_split_for_feature(X[rows, f], kinds[f], Ysub, min_leaf)
        if gain > best[0]:
            best = (gain, int(f), thr, is_cat)
    if best[0] <= _GAIN_EPS:
        return _NO_SPLIT
    return best


class RegressionTree:
    """CART-style multi-output regressor; nodes live in parallel arrays."""

    def __init__(
        self,
        max_depth: Optional[int] = None,
        min_leaf: int = 1,
        max_features: Optional[int] = None,
    ):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.feature: np.ndarray | None = None

    def fit(
        self,
        X: np.ndarray,
        kinds: tuple[int, ...],
        Y: np.ndarray,
        rng: Optional[np.random.Generator] = None,
    ) -> "RegressionTree":
        n, d = X.shape
        feature: list[int] = []
        threshold: list[float] = []
        is_cat: list[bool] = []
        left: list[int] = []
        right: list[int] = []
        value: list[np.ndarray] = []

        subset = self.max_features is not None and self.max_features < d
        max_depth = self.max_depth if self.max_depth is not None else np.inf

        stack: list[tuple[np.ndarray, int, int, bool]] = [(np.arange(n), 0, -1, False)]
        while stack:
            rows, depth, parent, went_left = stack.pop()
            node = len(feature)
            if parent >= 0:
                if went_left:
                    left[parent] = node
                else:
                    right[parent] = node
            feature.append(-1)
            threshold.append(0.0)
            is_cat.append(False)
            left.append(-1)
            right.append(-1)
            value.append(Y[rows].mean(axis=0))

            if depth >= max_depth or len(rows) < 2 * self.min_leaf:
                continue
            if subset:
                cand = np.sort(rng.choice(d, size=self.max_features, replace=False))
            else:
                cand = np.arange(d)
            gain, f, thr, cat = best_split(X, kinds, Y, rows, self.min_leaf, cand)
            if f < 0:
                continue
            col = X[rows, f]
            mask = (col == thr) if cat else (col <= thr)
            feature[node] = f
            threshold[node] = thr
            is_cat[node] = cat
            # push right first so the left child is visited (and numbered) next
            stack.append((rows[~mask], depth + 1, node, False))
            stack.append((rows[mask], depth + 1, node, True))

        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.is_cat = np.asarray(is_cat, dtype=bool)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.stack(value)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        n = len(X)
        out = np.empty((n, self.value.shape[1]))
        stack = [(0, np.arange(n))]
        while stack:
            node, rows = stack.pop()
            if len(rows) == 0:
                continue
            f = self.feature[node]
            if f < 0:
                out[rows] = self.value[node]
                continue
            col = X[rows, f]
            mask = (col == self.threshold[node]) if self.is_cat[node] else (col <= self.threshold[node])
            stack.append((int(self.left[node]), rows[mask]))
            stack.append((int(self.right[node]), rows[~mask]))
        return out

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "is_cat": self.is_cat.astype(np.int8),
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "RegressionTree":
        tree = cls()
        tree.feature = np.asarray(arrays["feature"], dtype=np.int64)
        tree.threshold = np.asarray(arrays["threshold"], dtype=np.float64)
        tree.is_cat = np.asarray(arrays["is_cat"]).astype(bool)
        tree.left = np.asarray(arrays["left"], dtype=np.int64)
        tree.right = np.asarray(arrays["right"], dtype=np.int64)
        tree.value = np.asarray(arrays["value"], dtype=np.float64)
        return tree
