"""Independent brute-force oracles shared by the test suite.

These deliberately re-derive quantities by enumeration so they never share
code paths with the implementations they check.
"""

import itertools
import math

import numpy as np

from fairgate.models import TreeEnsemble
from fairgate.trees import LEAF, Tree


def path_dependent_value(tree: Tree, x, subset) -> float:
    """Conditional expectation of one tree given the features in ``subset``:
    follow x on in-subset features, take the cover-weighted average of both
    children otherwise."""

    def walk(node: int) -> float:
        if tree.left[node] == LEAF:
            return float(tree.value[node])
        f = int(tree.feature[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        if f in subset:
            return walk(left) if x[f] <= tree.threshold[node] else walk(right)
        cl, cr = float(tree.cover[left]), float(tree.cover[right])
        return (cl * walk(left) + cr * walk(right)) / (cl + cr)

    return walk(0)


def shapley_brute_force(ensemble: TreeEnsemble, x, d: int):
    """Exact Shapley values by enumerating all 2^d feature subsets with the
    path-dependent value function. Returns (phi, base_value)."""
    if ensemble.mode == "additive-logit":
        scale = ensemble.config.learning_rate
        offset = ensemble.base_score
    else:
        scale = 1.0 / len(ensemble.trees)
        offset = 0.0

    def v(subset) -> float:
        return offset + scale * sum(
            path_dependent_value(t, x, subset) for t in ensemble.trees
        )

    phi = np.zeros(d)
    features = list(range(d))
    for j in features:
        rest = [f for f in features if f != j]
        for k in range(len(rest) + 1):
            weight = (math.factorial(k) * math.factorial(d - k - 1)
                      / math.factorial(d))
            for subset in itertools.combinations(rest, k):
                marginal = v(set(subset) | {j}) - v(set(subset))
                phi[j] += weight * marginal
    return phi, v(set())


def net_benefit_recount(probas, y, t: float) -> float:
    """Confusion-matrix recount of net benefit at threshold t."""
    tp = fp = 0
    for p, label in zip(probas, y):
        if p >= t:
            if label == 1:
                tp += 1
            else:
                fp += 1
    n = len(y)
    return tp / n - (fp / n) * (t / (1.0 - t))


def ks_merged_support(a, b) -> float:
    """Max |F_a - F_b| evaluated pointwise over the merged sample values."""
    a = sorted(a)
    b = sorted(b)
    best = 0.0
    for x in a + b:
        fa = sum(1 for v in a if v <= x) / len(a)
        fb = sum(1 for v in b if v <= x) / len(b)
        best = max(best, abs(fa - fb))
    return best


def random_ensemble(rng: np.random.Generator, d: int, n_trees: int,
                    depth: int, learning_rate: float = 0.3) -> TreeEnsemble:
    """A structurally random boosted ensemble (random splits, covers, and
    leaf values) for oracle comparisons. Covers are consistent parent sums."""
    from fairgate.models import TrainConfig

    trees = []
    for _ in range(n_trees):
        feature, threshold, left, right, value, cover, gain = [], [], [], [], [], [], []

        def build(level: int, cov: float) -> int:
            idx = len(feature)
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(0.0)
            cover.append(cov)
            gain.append(0.0)
            if level >= depth or rng.random() < 0.25:
                value[idx] = float(rng.normal())
                return idx
            feature[idx] = int(rng.integers(0, d))
            threshold[idx] = float(np.round(rng.normal(), 2))
            frac = float(rng.uniform(0.2, 0.8))
            left[idx] = build(level + 1, cov * frac)
            right[idx] = build(level + 1, cov * (1.0 - frac))
            gain[idx] = float(abs(rng.normal()))
            return idx

        build(0, float(rng.integers(50, 200)))
        trees.append(Tree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value, dtype=np.float64),
            cover=np.asarray(cover, dtype=np.float64),
            gain=np.asarray(gain, dtype=np.float64),
        ))
    cfg = TrainConfig(family="gbt", n_estimators=n_trees, max_depth=depth,
                      learning_rate=learning_rate)
    return TreeEnsemble(trees=trees, base_score=float(rng.normal() * 0.3),
                        mode="additive-logit", config=cfg)
