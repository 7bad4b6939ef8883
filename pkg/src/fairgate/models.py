"""Model training and evaluation: L2 logistic regression (damped Newton),
second-order gradient boosting, bootstrap random forests, and rank-based
metrics with stratified cross-validation.

Instance weights are rescaled to mean 1 on entry, which makes every trained
model exactly invariant to multiplying all weights by a positive constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NonfiniteLoss, SingleClassAUC, WidthMismatch
from .hashing import hash_obj
from .tabular import DataTable, fit_preprocessor, transform
from .trees import Tree, grow_gini_tree, grow_newton_tree

FAMILIES = ("logistic", "gbt", "rf")

_FAMILY_DEFAULTS = {
    "gbt": dict(n_estimators=100, max_depth=3, learning_rate=0.1),
    "rf": dict(n_estimators=200, max_depth=6, learning_rate=0.1),
    "logistic": dict(n_estimators=1, max_depth=1, learning_rate=0.1),
}


@dataclass(frozen=True)
class TrainConfig:
    family: str
    n_estimators: int
    max_depth: int
    learning_rate: float
    C: float = 1.0
    seed: int = 42
    threshold: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown model family {self.family!r}")
        if self.n_estimators < 1:
            raise InputError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise InputError("max_depth must be >= 1")
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be > 0")
        if self.C <= 0:
            raise InputError("C must be > 0")
        if not 0.0 < self.threshold < 1.0:
            raise InputError("label threshold must be in (0, 1)")

    @classmethod
    def for_family(cls, family: str, seed: int = 42, **overrides) -> "TrainConfig":
        if family not in _FAMILY_DEFAULTS:
            raise InputError(f"unknown model family {family!r}")
        params = dict(_FAMILY_DEFAULTS[family])
        params.update(overrides)
        return cls(family=family, seed=seed, **params)

    def to_jsonable(self) -> dict:
        return {
            "family": self.family,
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "C": self.C,
            "seed": self.seed,
            "threshold": self.threshold,
        }

    @classmethod
    def from_jsonable(cls, doc: dict) -> "TrainConfig":
        return cls(
            family=doc["family"],
            n_estimators=int(doc["n_estimators"]),
            max_depth=int(doc["max_depth"]),
            learning_rate=float(doc["learning_rate"]),
            C=float(doc["C"]),
            seed=int(doc["seed"]),
            threshold=float(doc["threshold"]),
        )


@dataclass
class LogisticModel:
    coef: np.ndarray
    intercept: float
    config: TrainConfig

    @property
    def width(self) -> int:
        return int(self.coef.size)

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef + self.intercept

    def to_jsonable(self) -> dict:
        return {
            "family": "logistic",
            "config": self.config.to_jsonable(),
            "coef": self.coef.tolist(),
            "intercept": float(self.intercept),
        }

    def hash(self) -> str:
        return hash_obj(self.to_jsonable())


@dataclass
class TreeEnsemble:
    trees: list[Tree]
    base_score: float
    mode: str  # "additive-logit" (boosting) or "probability-average" (bagging)
    config: TrainConfig

    @property
    def width(self) -> int:
        used = [int(t.feature.max()) for t in self.trees if (t.feature >= 0).any()]
        return (max(used) + 1) if used else 0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def raw_output(self, X: np.ndarray, tree_limit: int | None = None) -> np.ndarray:
        """Additive output: logit for boosting, mean leaf probability for
        bagging."""
        trees = self.trees if tree_limit is None else self.trees[:tree_limit]
        if self.mode == "additive-logit":
            out = np.full(X.shape[0], self.base_score, dtype=np.float64)
            lr = self.config.learning_rate
            for tree in trees:
                out += lr * tree.predict(X)
            return out
        out = np.zeros(X.shape[0], dtype=np.float64)
        for tree in trees:
            out += tree.predict(X)
        return out / max(len(trees), 1)

    def to_jsonable(self) -> dict:
        return {
            "family": self.config.family,
            "config": self.config.to_jsonable(),
            "base_score": float(self.base_score),
            "mode": self.mode,
            "trees": [t.to_jsonable() for t in self.trees],
        }

    def hash(self) -> str:
        return hash_obj(self.to_jsonable())


Model = LogisticModel | TreeEnsemble


def model_to_jsonable(model: Model) -> dict:
    return model.to_jsonable()


def model_from_jsonable(doc: dict) -> Model:
    cfg = TrainConfig.from_jsonable(doc["config"])
    if doc["family"] == "logistic":
        return LogisticModel(np.asarray(doc["coef"], dtype=np.float64),
                             float(doc["intercept"]), cfg)
    return TreeEnsemble(
        trees=[Tree.from_jsonable(t) for t in doc["trees"]],
        base_score=float(doc["base_score"]),
        mode=doc["mode"],
        config=cfg,
    )


@dataclass
class Predictions:
    proba: np.ndarray
    label: np.ndarray
    threshold: float


@dataclass(frozen=True)
class PerfReport:
    accuracy: float
    auc: float | None
    precision: float
    recall: float
    f1: float

    def to_jsonable(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auc": self.auc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _normalize_weights(n: int, w: np.ndarray | None) -> np.ndarray:
    if w is None:
        return np.ones(n, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.size != n:
        raise InputError(f"got {w.size} weights for {n} rows")
    if (w <= 0).any():
        raise InputError("instance weights must be positive")
    if w.min() == w.max():
        return np.ones(n, dtype=np.float64)  # uniform weights rescale exactly
    return w * (n / w.sum())


def _check_xy(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise InputError("X must be 2-D")
    if y.shape[0] != X.shape[0]:
        raise InputError("y length must match X rows")
    if not np.isin(y, (0, 1)).all():
        raise InputError("labels must be 0/1")
    return X, y.astype(np.float64)


# -- logistic regression -----------------------------------------------------


def logistic_objective(
    theta: np.ndarray, Xa: np.ndarray, y: np.ndarray, w: np.ndarray, C: float
) -> tuple[float, np.ndarray]:
    """Weighted L2 logistic objective and its gradient.

    J = (1/n) sum_i w_i * ce_i + (1/(C*n)) * ||beta||^2  with the intercept
    (last component of theta) unpenalized.
    """
    n = Xa.shape[0]
    z = Xa @ theta
    # ce = log(1 + e^z) - y*z, computed stably
    ce = np.logaddexp(0.0, z) - y * z
    penalty = theta[:-1] @ theta[:-1] / (C * n)
    loss = float((w * ce).sum() / n + penalty)
    p = _sigmoid(z)
    grad = Xa.T @ (w * (p - y)) / n
    grad[:-1] += 2.0 * theta[:-1] / (C * n)
    return loss, grad


def train_logistic(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    cfg: TrainConfig | None = None,
    max_iter: int = 1000,
    tol: float = 1e-8,
) -> LogisticModel:
    """Damped full-batch Newton with a gradient-descent fallback when the
    Newton system cannot be solved. Converges when the gradient max-norm
    drops below ``tol``."""
    cfg = cfg or TrainConfig.for_family("logistic")
    X, y = _check_xy(X, y)
    n, d = X.shape
    w = _normalize_weights(n, w)
    Xa = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(d + 1)
    loss, grad = logistic_objective(theta, Xa, y, w, cfg.C)
    for _ in range(max_iter):
        if not math.isfinite(loss):
            raise NonfiniteLoss("logistic loss became non-finite")
        if np.abs(grad).max() < tol:
            break
        z = Xa @ theta
        p = _sigmoid(z)
        D = w * p * (1.0 - p)
        H = (Xa.T * D) @ Xa / n
        H[np.diag_indices(d)] += 2.0 / (cfg.C * n)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = grad  # singular update: fall back to a gradient step
        # backtracking line search keeps the loss monotone
        t = 1.0
        for _ in range(60):
            cand = theta - t * step
            new_loss, new_grad = logistic_objective(cand, Xa, y, w, cfg.C)
            if new_loss <= loss + 1e-14:
                break
            t *= 0.5
        else:
            break  # no descent direction left; accept current point
        theta, loss, grad = cand, new_loss, new_grad
    return LogisticModel(coef=theta[:-1].copy(), intercept=float(theta[-1]), config=cfg)


# -- gradient boosted trees ----------------------------------------------------


def weighted_logloss(y: np.ndarray, logit: np.ndarray, w: np.ndarray) -> float:
    ce = np.logaddexp(0.0, logit) - y * logit
    return float((w * ce).sum() / w.sum())


def _base_logit(y: np.ndarray, w: np.ndarray) -> float:
    p = float((w * y).sum() / w.sum())
    p = min(max(p, 1e-12), 1.0 - 1e-12)
    return math.log(p / (1.0 - p))


def train_gbt(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    cfg: TrainConfig | None = None,
) -> TreeEnsemble:
    """Additive logistic-loss boosting: each round fits a depth-bounded tree
    to the weighted gradients/hessians and shrinks it by the learning rate."""
    cfg = cfg or TrainConfig.for_family("gbt")
    X, y = _check_xy(X, y)
    w = _normalize_weights(X.shape[0], w)
    base = _base_logit(y, w)
    F = np.full(X.shape[0], base, dtype=np.float64)
    trees: list[Tree] = []
    for _ in range(cfg.n_estimators):
        p = _sigmoid(F)
        g = w * (p - y)
        h = w * p * (1.0 - p)
        tree = grow_newton_tree(X, g, h, w, max_depth=cfg.max_depth,
                                min_child_weight=1.0)
        trees.append(tree)
        F += cfg.learning_rate * tree.predict(X)
        if not np.isfinite(F).all():
            raise NonfiniteLoss("boosting scores became non-finite")
    return TreeEnsemble(trees=trees, base_score=base, mode="additive-logit", config=cfg)


# -- random forest -------------------------------------------------------------


def train_rf(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    cfg: TrainConfig | None = None,
    bootstrap: bool = True,
    feature_subsample: bool = True,
) -> TreeEnsemble:
    """Bootstrap forest of weighted Gini trees with ceil(sqrt(d)) candidate
    features per split. Each tree draws from its own seeded generator, so
    sequential and parallel construction would be bit-identical."""
    cfg = cfg or TrainConfig.for_family("rf")
    X, y = _check_xy(X, y)
    n, d = X.shape
    w = _normalize_weights(n, w)
    k = int(math.ceil(math.sqrt(d))) if feature_subsample else None
    trees: list[Tree] = []
    for t in range(cfg.n_estimators):
        rng = np.random.default_rng([cfg.seed, t])
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = grow_gini_tree(
            X[idx], y[idx].astype(np.int64), w[idx],
            max_depth=cfg.max_depth, rng=rng, n_candidate_features=k,
        )
        trees.append(tree)
    return TreeEnsemble(trees=trees, base_score=0.0, mode="probability-average",
                        config=cfg)


def train_model(
    X: np.ndarray, y: np.ndarray, w: np.ndarray | None, cfg: TrainConfig
) -> Model:
    if cfg.family == "logistic":
        return train_logistic(X, y, w, cfg)
    if cfg.family == "gbt":
        return train_gbt(X, y, w, cfg)
    return train_rf(X, y, w, cfg)


# -- prediction and evaluation -------------------------------------------------


def predict(model: Model, X: np.ndarray, tree_limit: int | None = None) -> Predictions:
    X = np.asarray(X, dtype=np.float64)
    if isinstance(model, LogisticModel):
        if X.shape[1] != model.width:
            raise WidthMismatch(f"X has {X.shape[1]} columns, model expects {model.width}")
        proba = _sigmoid(model.decision(X))
    else:
        if model.width > X.shape[1]:
            raise WidthMismatch(f"X has {X.shape[1]} columns, ensemble uses {model.width}")
        if model.mode == "additive-logit":
            proba = _sigmoid(model.raw_output(X, tree_limit))
        else:
            proba = np.clip(model.raw_output(X, tree_limit), 0.0, 1.0)
    threshold = model.config.threshold
    return Predictions(proba=proba, label=(proba >= threshold).astype(np.int64),
                       threshold=threshold)


def auc_score(proba: np.ndarray, y: np.ndarray) -> float:
    """Rank/concordance AUC with 0.5 credit for ties."""
    y = np.asarray(y)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassAUC("AUC needs at least one positive and one negative")
    order = np.argsort(proba, kind="stable")
    sorted_p = proba[order]
    ranks = np.empty(y.size, dtype=np.float64)
    i = 0
    while i < y.size:
        j = i
        while j + 1 < y.size and sorted_p[j + 1] == sorted_p[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def confusion_counts(label: np.ndarray, y: np.ndarray) -> tuple[int, int, int, int]:
    label = np.asarray(label)
    y = np.asarray(y)
    tp = int(((label == 1) & (y == 1)).sum())
    fp = int(((label == 1) & (y == 0)).sum())
    tn = int(((label == 0) & (y == 0)).sum())
    fn = int(((label == 0) & (y == 1)).sum())
    return tp, fp, tn, fn


def evaluate(preds: Predictions, y: np.ndarray, require_auc: bool = True) -> PerfReport:
    y = np.asarray(y)
    if y.size != preds.proba.size:
        raise InputError("predictions and labels differ in length")
    tp, fp, tn, fn = confusion_counts(preds.label, y)
    n = tp + fp + tn + fn
    accuracy = (tp + tn) / n
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if (precision + recall) > 0 else 0.0)
    if require_auc:
        auc = auc_score(preds.proba, y)
    else:
        try:
            auc = auc_score(preds.proba, y)
        except SingleClassAUC:
            auc = None
    return PerfReport(accuracy=accuracy, auc=auc, precision=precision,
                      recall=recall, f1=f1)


# -- cross-validation ----------------------------------------------------------


@dataclass
class CVReport:
    folds: list[PerfReport]
    mean: dict[str, float]
    sd: dict[str, float]

    def to_jsonable(self) -> dict:
        return {
            "folds": [f.to_jsonable() for f in self.folds],
            "mean": self.mean,
            "sd": self.sd,
        }


def cross_validate(
    table: DataTable, k: int, cfg: TrainConfig, seed: int = 42
) -> CVReport:
    """k-fold CV stratified on z = 2y + s, with the preprocessor re-fit
    inside each training fold so no statistics leak from held-out rows."""
    if k < 2:
        raise InputError("k must be >= 2")
    if k > table.n:
        raise InputError("k cannot exceed the number of rows")
    z = table.z()
    fold_of = np.empty(table.n, dtype=np.int64)
    for stratum in sorted(set(int(v) for v in z)):
        idx = np.flatnonzero(z == stratum)
        rng = np.random.default_rng([seed, 1000 + stratum])
        perm = idx[rng.permutation(idx.size)]
        fold_of[perm] = np.arange(perm.size) % k
    reports: list[PerfReport] = []
    for fold in range(k):
        test_idx = np.flatnonzero(fold_of == fold)
        train_idx = np.flatnonzero(fold_of != fold)
        if test_idx.size == 0 or train_idx.size == 0:
            continue
        train_t = table.subset(train_idx)
        test_t = table.subset(test_idx)
        prep = fit_preprocessor(train_t)
        Xtr = transform(prep, train_t).values
        Xte = transform(prep, test_t).values
        model = train_model(Xtr, train_t.y(), None, cfg)
        preds = predict(model, Xte)
        reports.append(evaluate(preds, test_t.y(), require_auc=False))
    metrics = ("accuracy", "auc", "precision", "recall", "f1")
    mean: dict[str, float] = {}
    sd: dict[str, float] = {}
    for m in metrics:
        vals = [getattr(r, m) for r in reports if getattr(r, m) is not None]
        if vals:
            mean[m] = float(np.mean(vals))
            sd[m] = float(np.std(vals))
    return CVReport(folds=reports, mean=mean, sd=sd)
