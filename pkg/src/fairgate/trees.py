"""Decision-tree structure and growers shared by boosting and bagging.

Trees are stored as flat parallel arrays (feature, threshold, children, leaf
value, cover, gain). Routing is `x <= threshold` goes left. Covers record the
weighted training mass through each node; TreeSHAP consumes them as
path-dependent expectations, so every node cover must stay positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray  # int32, LEAF at leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32, LEAF at leaves
    right: np.ndarray  # int32
    value: np.ndarray  # float64, meaningful at leaves
    cover: np.ndarray  # float64, weighted sample mass per node
    gain: np.ndarray  # float64, split gain at internal nodes, 0 at leaves

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] == LEAF

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Vectorized routing of every row to its leaf value."""
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int32)
        active = self.left[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.left[node] != LEAF
        return self.value[node]

    def expected_value(self) -> float:
        """Cover-weighted mean leaf value (the path-dependent expectation of
        the whole tree)."""
        leaves = self.left == LEAF
        return float(np.dot(self.cover[leaves], self.value[leaves]) / self.cover[0])

    def max_depth_reached(self) -> int:
        depth = {0: 0}
        out = 0
        for node in range(self.n_nodes):
            d = depth[node]
            if self.left[node] != LEAF:
                depth[int(self.left[node])] = d + 1
                depth[int(self.right[node])] = d + 1
                out = max(out, d + 1)
        return out

    def to_jsonable(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_jsonable(cls, doc: dict) -> "Tree":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int32),
            threshold=np.asarray(doc["threshold"], dtype=np.float64),
            left=np.asarray(doc["left"], dtype=np.int32),
            right=np.asarray(doc["right"], dtype=np.int32),
            value=np.asarray(doc["value"], dtype=np.float64),
            cover=np.asarray(doc["cover"], dtype=np.float64),
            gain=np.asarray(doc["gain"], dtype=np.float64),
        )


class _TreeBuilder:
    """Accumulates nodes during recursive growth, then freezes to a Tree."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.cover: list[float] = []
        self.gain: list[float] = []

    def add(self) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(0.0)
        self.cover.append(0.0)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def freeze(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            cover=np.asarray(self.cover, dtype=np.float64),
            gain=np.asarray(self.gain, dtype=np.float64),
        )


def _best_threshold(xv: np.ndarray, score_fn) -> tuple[float, float] | None:
    """Scan all boundaries between distinct sorted values of one feature.

    ``score_fn(order, boundary_positions)`` returns a gain array for splits
    placed after each boundary position (left = order[:pos+1]). Returns
    (gain, threshold) for the best boundary, preferring the lowest threshold
    on ties, or None when no valid boundary exists.
    """
    order = np.argsort(xv, kind="stable")
    xs = xv[order]
    boundary = np.flatnonzero(xs[:-1] < xs[1:])
    if boundary.size == 0:
        return None
    gains = score_fn(order, boundary)
    best = int(np.argmax(gains))  # first max -> lowest threshold on ties
    if not np.isfinite(gains[best]):
        return None
    pos = boundary[best]
    mid = 0.5 * (xs[pos] + xs[pos + 1])
    thr = mid if mid < xs[pos + 1] else float(xs[pos])
    return float(gains[best]), float(thr)


def grow_newton_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    w: np.ndarray,
    max_depth: int,
    min_child_weight: float = 1.0,
) -> Tree:
    """Second-order boosting tree: split gain 0.5*(GL^2/HL + GR^2/HR - G^2/H),
    Newton leaf values -G/H. A node with no positive-gain split becomes a
    leaf. Ties break toward the lowest feature index, then lowest threshold.
    """
    builder = _TreeBuilder()

    def grow(idx: np.ndarray, depth: int) -> int:
        node = builder.add()
        G = float(g[idx].sum())
        H = float(h[idx].sum())
        builder.cover[node] = float(w[idx].sum())
        builder.value[node] = -G / H if H > 0 else 0.0
        if depth >= max_depth or idx.size < 2:
            return node
        parent_score = G * G / H if H > 0 else 0.0
        best = None  # (gain, feature, threshold)
        for f in range(X.shape[1]):
            xv = X[idx, f]
            gi = g[idx]
            hi = h[idx]

            def score(order, boundary):
                gl = np.cumsum(gi[order])[boundary]
                hl = np.cumsum(hi[order])[boundary]
                gr = G - gl
                hr = H - hl
                valid = (hl >= min_child_weight) & (hr >= min_child_weight)
                with np.errstate(divide="ignore", invalid="ignore"):
                    gains = 0.5 * (gl * gl / hl + gr * gr / hr - parent_score)
                gains[~valid] = -np.inf
                return gains

            found = _best_threshold(xv, score)
            if found is None:
                continue
            gain, thr = found
            if best is None or gain > best[0] + 1e-15:
                best = (gain, f, thr)
        if best is None or best[0] <= 0.0:
            return node  # degenerate split: node stays a leaf
        gain, f, thr = best
        go_left = X[idx, f] <= thr
        builder.feature[node] = f
        builder.threshold[node] = thr
        builder.gain[node] = gain
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        builder.left[node] = left
        builder.right[node] = right
        return node

    grow(np.arange(X.shape[0]), 0)
    return builder.freeze()


def grow_gini_tree(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    max_depth: int,
    rng: np.random.Generator,
    n_candidate_features: int | None = None,
    min_leaf_weight: float = 0.0,
) -> Tree:
    """Weighted CART-style classification tree. Gain is the mass-weighted
    Gini impurity decrease; leaf values are weighted positive rates. When
    ``n_candidate_features`` is set, that many features are drawn without
    replacement at every split from ``rng``.
    """
    builder = _TreeBuilder()
    d = X.shape[1]

    def gini_sum(wy: float, ww: float) -> float:
        # ww * gini = ww * 2p(1-p) with p = wy/ww
        if ww <= 0:
            return 0.0
        p = wy / ww
        return ww * 2.0 * p * (1.0 - p)

    def grow(idx: np.ndarray, depth: int) -> int:
        node = builder.add()
        ww = float(w[idx].sum())
        wy = float((w[idx] * y[idx]).sum())
        builder.cover[node] = ww
        builder.value[node] = wy / ww if ww > 0 else 0.0
        if depth >= max_depth or idx.size < 2:
            return node
        parent_impurity = gini_sum(wy, ww)
        if parent_impurity <= 0.0:
            return node  # pure node
        if n_candidate_features is not None and n_candidate_features < d:
            cand = np.sort(rng.choice(d, size=n_candidate_features, replace=False))
        else:
            cand = np.arange(d)
        best = None
        for f in cand:
            xv = X[idx, f]
            wi = w[idx]
            wyi = w[idx] * y[idx]

            def score(order, boundary):
                cw = np.cumsum(wi[order])[boundary]
                cwy = np.cumsum(wyi[order])[boundary]
                rw = ww - cw
                rwy = wy - cwy
                valid = (cw > min_leaf_weight) & (rw > min_leaf_weight)
                with np.errstate(divide="ignore", invalid="ignore"):
                    pl = cwy / cw
                    pr = rwy / rw
                    child = cw * 2.0 * pl * (1.0 - pl) + rw * 2.0 * pr * (1.0 - pr)
                gains = parent_impurity - child
                gains[~valid] = -np.inf
                return gains

            found = _best_threshold(xv, score)
            if found is None:
                continue
            gain, thr = found
            if best is None or gain > best[0] + 1e-15:
                best = (gain, int(f), thr)
        if best is None or best[0] <= 1e-12:
            return node
        gain, f, thr = best
        go_left = X[idx, f] <= thr
        builder.feature[node] = f
        builder.threshold[node] = thr
        builder.gain[node] = gain
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        builder.left[node] = left
        builder.right[node] = right
        return node

    grow(np.arange(X.shape[0]), 0)
    return builder.freeze()
