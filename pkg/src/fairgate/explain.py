"""Versioned explanation artifacts: exact path-dependent TreeSHAP, global
mean-|attribution| and split-gain importances, perturbation-based local
surrogates, and single-feature counterfactual deltas.

TreeSHAP runs the polynomial-time path recursion over stored node covers, so
attributions are exact conditional-expectation Shapley values in the
ensemble's additive space (logit for boosting, probability for bagging) and
satisfy local accuracy: base value plus attributions equals the model output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDesign,
    EmptyGrid,
    InputError,
    MissingCover,
    NonNumericFeature,
    WidthMismatch,
)
from .hashing import hash_obj
from .models import Model, TreeEnsemble, predict
from .tabular import CATEGORICAL, DataTable, FittedPreprocessor, transform
from .trees import LEAF, Tree


@dataclass(frozen=True)
class ShapExplanation:
    base_value: float
    phi: np.ndarray
    fx: float
    model_hash: str
    instance_hash: str

    def to_jsonable(self) -> dict:
        return {
            "model_hash": self.model_hash,
            "instance_id": self.instance_hash,
            "base_value": self.base_value,
            "phi": self.phi.tolist(),
            "f_x": self.fx,
        }


@dataclass(frozen=True)
class GlobalImportance:
    importances: np.ndarray  # nonnegative, one per feature column
    ranking: tuple[int, ...]  # feature indices, descending importance
    mode: str  # "shap" or "gain"
    model_hash: str
    columns: tuple[str, ...] | None = None

    def to_jsonable(self) -> list[dict]:
        out = []
        for idx in self.ranking:
            name = self.columns[idx] if self.columns else str(idx)
            out.append(
                {"model_hash": self.model_hash, "feature": name,
                 "importance": float(self.importances[idx])}
            )
        return out


# -- exact TreeSHAP ------------------------------------------------------------


def _unwound_sum(z: list, o: list, w: list, i: int) -> float:
    """Sum of path weights after hypothetically removing path element i."""
    ud = len(w) - 1
    one = o[i]
    zero = z[i]
    total = 0.0
    if one != 0.0:
        next_one = w[ud]
        for j in range(ud - 1, -1, -1):
            tmp = next_one * (ud + 1) / ((j + 1) * one)
            total += tmp
            next_one = w[j] - tmp * zero * (ud - j) / (ud + 1)
    else:
        for j in range(ud - 1, -1, -1):
            total += w[j] * (ud + 1) / (zero * (ud - j))
    return total


def _unwind(d: list, z: list, o: list, w: list, i: int) -> None:
    """Remove path element i, restoring the weights to their pre-extend
    state."""
    ud = len(w) - 1
    one = o[i]
    zero = z[i]
    if one != 0.0:
        next_one = w[ud]
        for j in range(ud - 1, -1, -1):
            tmp = w[j]
            w[j] = next_one * (ud + 1) / ((j + 1) * one)
            next_one = tmp - w[j] * zero * (ud - j) / (ud + 1)
    else:
        for j in range(ud - 1, -1, -1):
            w[j] = w[j] * (ud + 1) / (zero * (ud - j))
    for j in range(i, ud):
        d[j] = d[j + 1]
        z[j] = z[j + 1]
        o[j] = o[j + 1]
    d.pop()
    z.pop()
    o.pop()
    w.pop()


def _shap_one_tree(
    feature: list, threshold: list, left: list, right: list,
    value: list, cover: list, x: list, phi: list, scale: float,
) -> None:
    """Accumulate one tree's Shapley attributions into ``phi`` (scaled)."""

    def recurse(node: int, pd: list, pz: list, po: list, pw: list,
                parent_zero: float, parent_one: float, parent_idx: int) -> None:
        # copy parent path, then extend with the incoming edge fractions
        d = pd[:]
        z = pz[:]
        o = po[:]
        w = pw[:]
        l = len(d)
        d.append(parent_idx)
        z.append(parent_zero)
        o.append(parent_one)
        w.append(1.0 if l == 0 else 0.0)
        for i in range(l - 1, -1, -1):
            w[i + 1] += parent_one * w[i] * (i + 1) / (l + 1)
            w[i] = parent_zero * w[i] * (l - i) / (l + 1)

        child = left[node]
        if child == LEAF:
            leaf_val = value[node] * scale
            for i in range(1, len(d)):
                s = _unwound_sum(z, o, w, i)
                phi[d[i]] += s * (o[i] - z[i]) * leaf_val
            return
        f = feature[node]
        if x[f] <= threshold[node]:
            hot, cold = child, right[node]
        else:
            hot, cold = right[node], child
        cov = cover[node]
        hot_zero = cover[hot] / cov
        cold_zero = cover[cold] / cov
        iz = 1.0
        io = 1.0
        for i in range(1, len(d)):
            if d[i] == f:
                iz = z[i]
                io = o[i]
                _unwind(d, z, o, w, i)
                break
        recurse(hot, d, z, o, w, hot_zero * iz, io, f)
        recurse(cold, d, z, o, w, cold_zero * iz, 0.0, f)

    recurse(0, [], [], [], [], 1.0, 1.0, -1)


def _tree_as_lists(tree: Tree) -> tuple:
    if (tree.cover <= 0).any():
        raise MissingCover("every tree node must carry a positive cover")
    return (
        tree.feature.tolist(),
        tree.threshold.tolist(),
        tree.left.tolist(),
        tree.right.tolist(),
        tree.value.tolist(),
        tree.cover.tolist(),
    )


def _ensemble_scales(ensemble: TreeEnsemble) -> tuple[float, float]:
    """(per-tree scale, base value) so the additive output is
    base + sum(scale * tree outputs)."""
    if ensemble.mode == "additive-logit":
        return ensemble.config.learning_rate, ensemble.base_score
    return 1.0 / max(len(ensemble.trees), 1), 0.0


def tree_shap_matrix(
    ensemble: TreeEnsemble, X: np.ndarray
) -> tuple[np.ndarray, float, np.ndarray]:
    """TreeSHAP for every row of X. Returns (phi matrix, base value, additive
    model output per row)."""
    X = np.asarray(X, dtype=np.float64)
    if ensemble.width > X.shape[1]:
        raise WidthMismatch(
            f"X has {X.shape[1]} columns, ensemble uses {ensemble.width}"
        )
    scale, offset = _ensemble_scales(ensemble)
    tree_lists = [_tree_as_lists(t) for t in ensemble.trees]
    base_value = offset + scale * sum(t.expected_value() for t in ensemble.trees)
    d = X.shape[1]
    phi_out = np.zeros((X.shape[0], d), dtype=np.float64)
    rows = X.tolist()
    for r, x in enumerate(rows):
        phi = [0.0] * d
        for lists in tree_lists:
            _shap_one_tree(*lists, x, phi, scale)
        phi_out[r] = phi
    fx = ensemble.raw_output(X)
    return phi_out, float(base_value), fx


def tree_shap(ensemble: TreeEnsemble, x: np.ndarray) -> ShapExplanation:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    phi, base_value, fx = tree_shap_matrix(ensemble, x)
    return ShapExplanation(
        base_value=base_value,
        phi=phi[0],
        fx=float(fx[0]),
        model_hash=ensemble.hash(),
        instance_hash=hash_obj(x[0].tolist()),
    )


def shap_global(
    ensemble: TreeEnsemble,
    X_sample: np.ndarray,
    columns: tuple[str, ...] | None = None,
) -> GlobalImportance:
    """Mean |attribution| per feature over a sample (at most the first 300
    rows), ranked descending."""
    X_sample = np.asarray(X_sample, dtype=np.float64)
    if X_sample.shape[0] == 0:
        raise InputError("SHAP sample must be nonempty")
    X_sample = X_sample[:300]
    phi, _, _ = tree_shap_matrix(ensemble, X_sample)
    imp = np.abs(phi).mean(axis=0)
    ranking = tuple(int(i) for i in np.argsort(-imp, kind="stable"))
    return GlobalImportance(
        importances=imp, ranking=ranking, mode="shap",
        model_hash=ensemble.hash(), columns=columns,
    )


def gain_importance(
    ensemble: TreeEnsemble, columns: tuple[str, ...] | None = None
) -> GlobalImportance:
    """Total split gain per feature across all trees."""
    width = max(ensemble.width, len(columns) if columns else 0)
    imp = np.zeros(width, dtype=np.float64)
    for tree in ensemble.trees:
        internal = tree.feature >= 0
        np.add.at(imp, tree.feature[internal], tree.gain[internal])
    ranking = tuple(int(i) for i in np.argsort(-imp, kind="stable"))
    return GlobalImportance(
        importances=imp, ranking=ranking, mode="gain",
        model_hash=ensemble.hash(), columns=columns,
    )


# -- LIME-style local surrogate --------------------------------------------------


@dataclass(frozen=True)
class BackgroundStats:
    """Feature-space perturbation statistics: standard deviations for plain
    numeric columns and category frequencies for each one-hot block."""

    numeric_idx: tuple[int, ...]
    numeric_sd: np.ndarray
    blocks: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...]
    # each block: (column indices, per-category probabilities; a remainder
    # probability leaves the block all-zero, mirroring unknown categories)


def background_stats(prep: FittedPreprocessor, X_train: np.ndarray) -> BackgroundStats:
    X_train = np.asarray(X_train, dtype=np.float64)
    names = prep.feature_names
    block_cols: dict[str, list[int]] = {}
    numeric_idx = []
    for j, name in enumerate(names):
        if "=" in name and name.split("=", 1)[0] in prep.categories:
            block_cols.setdefault(name.split("=", 1)[0], []).append(j)
        else:
            numeric_idx.append(j)
    blocks = []
    for col, idxs in block_cols.items():
        freqs = X_train[:, idxs].mean(axis=0)
        blocks.append((tuple(idxs), tuple(float(f) for f in freqs)))
    sd = X_train[:, numeric_idx].std(axis=0) if numeric_idx else np.zeros(0)
    return BackgroundStats(tuple(numeric_idx), sd, tuple(blocks))


@dataclass(frozen=True)
class LimeExplanation:
    coef: np.ndarray
    intercept: float
    kernel_width: float
    n_samples: int
    fidelity: float | None  # weighted R^2; None when undefined (constant fn)

    def to_jsonable(self) -> dict:
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "kernel_width": self.kernel_width,
            "n_samples": self.n_samples,
            "fidelity": self.fidelity,
        }


def lime_local(
    predict_fn,
    x: np.ndarray,
    background: BackgroundStats,
    n_samples: int = 1000,
    seed: int = 0,
    kernel_width: float | None = None,
) -> LimeExplanation:
    """Gaussian perturbation of numerics (scaled by background SD) plus
    categorical resampling from training frequencies, then a distance-kernel
    weighted least-squares surrogate."""
    if n_samples < 50:
        raise InputError("lime_local needs n_samples >= 50")
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    rng = np.random.default_rng(seed)
    Xp = np.tile(x, (n_samples, 1))
    if background.numeric_idx:
        idx = list(background.numeric_idx)
        noise = rng.normal(0.0, 1.0, size=(n_samples, len(idx))) * background.numeric_sd
        Xp[:, idx] += noise
    for cols, freqs in background.blocks:
        probs = list(freqs) + [max(0.0, 1.0 - sum(freqs))]
        probs = np.asarray(probs)
        probs = probs / probs.sum()
        choice = rng.choice(len(probs), size=n_samples, p=probs)
        Xp[:, list(cols)] = 0.0
        for k, col in enumerate(cols):
            Xp[choice == k, col] = 1.0
    if np.allclose(Xp, Xp[0]):
        raise DegenerateDesign("all perturbations identical; nothing to fit")
    preds = np.asarray(predict_fn(Xp), dtype=np.float64)
    width = kernel_width if kernel_width is not None else 0.75 * np.sqrt(d)
    dist = np.sqrt(((Xp - x) ** 2).sum(axis=1))
    kernel = np.exp(-((dist / width) ** 2))
    sw = np.sqrt(kernel)
    A = np.hstack([Xp, np.ones((n_samples, 1))]) * sw[:, None]
    b = preds * sw
    theta, *_ = np.linalg.lstsq(A, b, rcond=None)
    fitted = np.hstack([Xp, np.ones((n_samples, 1))]) @ theta
    wmean = float((kernel * preds).sum() / kernel.sum())
    ss_tot = float((kernel * (preds - wmean) ** 2).sum())
    ss_res = float((kernel * (preds - fitted) ** 2).sum())
    fidelity = None if ss_tot <= 1e-18 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return LimeExplanation(
        coef=theta[:-1].copy(),
        intercept=float(theta[-1]),
        kernel_width=float(width),
        n_samples=n_samples,
        fidelity=fidelity,
    )


# -- counterfactual deltas ---------------------------------------------------------


@dataclass(frozen=True)
class Counterfactual:
    feature: str
    found: bool
    delta: float  # signed change in original units (0 when not found)
    risk_change: float
    crossed_threshold: bool
    base_risk: float

    def to_jsonable(self) -> dict:
        return {
            "feature": self.feature,
            "found": self.found,
            "delta": self.delta,
            "risk_change": self.risk_change,
            "crossed_threshold": self.crossed_threshold,
            "base_risk": self.base_risk,
        }


def render_counterfactual(cf: Counterfactual, units: str = "") -> str:
    if not cf.found:
        return f"No counterfactual in range for {cf.feature}"
    verb = "Reducing" if cf.delta < 0 else "Increasing"
    effect = "decreases" if cf.risk_change < 0 else "increases"
    amount = f"{abs(cf.delta):g}" + (f" {units}" if units else "")
    return (f"{verb} {cf.feature} by {amount} {effect} predicted risk "
            f"by {abs(cf.risk_change):.3f}")


def counterfactual_delta(
    model: Model,
    prep: FittedPreprocessor,
    table: DataTable,
    row_index: int,
    feature: str,
    direction: str = "decrease",
    step: float = 1.0,
    min_change: float | None = None,
    threshold: float | None = None,
) -> Counterfactual:
    """Scan grid multiples of ``step`` (both feature directions, smallest
    |delta| first, bounded to the training min/max) for the first change that
    moves predicted risk in ``direction`` by at least ``min_change`` or
    crosses ``threshold``."""
    if direction not in ("decrease", "increase"):
        raise InputError("direction must be 'decrease' or 'increase'")
    if step <= 0:
        raise EmptyGrid("grid step must be positive")
    if min_change is None and threshold is None:
        min_change = 0.0
        threshold = model.config.threshold
    col = table.schema.column(feature)
    if col.kind == CATEGORICAL:
        raise NonNumericFeature(f"{feature!r} is categorical")
    if feature not in prep.mins:
        raise NonNumericFeature(f"{feature!r} is not a numeric feature")
    lo, hi = prep.mins[feature], prep.maxs[feature]
    base_row = table.rows[row_index]
    col_idx = table.schema.index(feature)
    base_val = base_row[col_idx]
    if base_val is None:
        base_val = prep.medians[feature]

    def risk_of(value: float) -> float:
        cells = list(base_row)
        cells[col_idx] = value
        probe = DataTable(table.schema, [tuple(cells)])
        X = transform(prep, probe).values
        return float(predict(model, X).proba[0])

    base_risk = risk_of(float(base_val))
    sign = -1.0 if direction == "decrease" else 1.0
    max_steps = int(np.ceil((hi - lo) / step)) if hi > lo else 0
    if max_steps == 0:
        raise EmptyGrid(f"feature {feature!r} has a degenerate training range")
    for k in range(1, max_steps + 1):
        for delta in (-k * step, k * step):
            candidate = float(base_val) + delta
            if candidate < lo or candidate > hi:
                continue
            risk = risk_of(candidate)
            change = risk - base_risk
            moved = sign * change
            crossed = (
                threshold is not None
                and ((base_risk >= threshold) != (risk >= threshold))
                and moved > 0
            )
            if (min_change is not None and moved >= max(min_change, 1e-12)
                    and (threshold is None or crossed)):
                return Counterfactual(feature, True, delta, change, bool(crossed),
                                      base_risk)
            if min_change is None and crossed:
                return Counterfactual(feature, True, delta, change, True, base_risk)
    return Counterfactual(feature, False, 0.0, 0.0, False, base_risk)
