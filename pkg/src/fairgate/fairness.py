"""Group fairness metrics, threshold audits, and bias mitigation.

DPD is the absolute gap in positive-prediction rates between the two audited
groups; EO is the larger of the absolute TPR and FPR gaps (0 means parity of
both error rates). Mitigation offers inverse-conditional-frequency instance
reweighting and an adversarial penalty variant for logistic models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroup, InputError, NonfiniteLoss
from .hashing import canonical_json, hash_obj
from .models import (
    LogisticModel,
    TrainConfig,
    _sigmoid,
    logistic_objective,
    train_logistic,
)


@dataclass(frozen=True)
class GroupConfusion:
    group: int
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def size(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d > 0 else None

    @property
    def fpr(self) -> float | None:
        d = self.fp + self.tn
        return self.fp / d if d > 0 else None

    @property
    def positive_rate(self) -> float:
        return (self.tp + self.fp) / self.size

    def to_jsonable(self) -> dict:
        return {
            "group": self.group,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "positive_rate": self.positive_rate,
        }


@dataclass(frozen=True)
class FairnessThresholds:
    dpd_gate: float = 0.05
    dpd_warn: float = 0.10
    eo_gate: float = 0.05

    def to_jsonable(self) -> dict:
        return {"dpd_gate": self.dpd_gate, "dpd_warn": self.dpd_warn,
                "eo_gate": self.eo_gate}


@dataclass(frozen=True)
class FairnessReport:
    dpd: float
    eo: float
    groups: tuple[GroupConfusion, GroupConfusion]
    thresholds: FairnessThresholds
    dpd_status: str  # pass | warn | fail
    eo_status: str
    degraded: bool  # an undefined TPR/FPR was encountered
    fingerprint: str | None = None
    label_dpd: float | None = None  # raw label-rate parity, when recorded

    def to_jsonable(self) -> dict:
        return {
            "dpd": self.dpd,
            "eo": self.eo,
            "groups": [g.to_jsonable() for g in self.groups],
            "thresholds": self.thresholds.to_jsonable(),
            "dpd_status": self.dpd_status,
            "eo_status": self.eo_status,
            "degraded": self.degraded,
            "fingerprint": self.fingerprint,
            "label_dpd": self.label_dpd,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_jsonable())

    def hash(self) -> str:
        return hash_obj(self.to_jsonable())

    @classmethod
    def from_jsonable(cls, doc: dict) -> "FairnessReport":
        groups = tuple(
            GroupConfusion(g["group"], g["tp"], g["fp"], g["tn"], g["fn"])
            for g in doc["groups"]
        )
        th = doc["thresholds"]
        return cls(
            dpd=float(doc["dpd"]),
            eo=float(doc["eo"]),
            groups=groups,  # type: ignore[arg-type]
            thresholds=FairnessThresholds(th["dpd_gate"], th["dpd_warn"], th["eo_gate"]),
            dpd_status=doc["dpd_status"],
            eo_status=doc["eo_status"],
            degraded=bool(doc["degraded"]),
            fingerprint=doc.get("fingerprint"),
            label_dpd=doc.get("label_dpd"),
        )


def _as_binary(arr, name: str) -> np.ndarray:
    out = np.asarray(arr)
    if not np.isin(out, (0, 1)).all():
        raise InputError(f"{name} must be 0/1")
    return out.astype(np.int64)


def demographic_parity_difference(preds, s) -> float:
    """|P(yhat=1 | s=1) - P(yhat=1 | s=0)|."""
    preds = _as_binary(preds, "predictions")
    s = _as_binary(s, "sensitive attribute")
    for g in (0, 1):
        if (s == g).sum() == 0:
            raise EmptyGroup(g)
    rate1 = preds[s == 1].mean()
    rate0 = preds[s == 0].mean()
    return float(abs(rate1 - rate0))


def group_confusions(preds, y, s) -> tuple[GroupConfusion, GroupConfusion]:
    preds = _as_binary(preds, "predictions")
    y = _as_binary(y, "labels")
    s = _as_binary(s, "sensitive attribute")
    out = []
    for g in (0, 1):
        mask = s == g
        if mask.sum() == 0:
            raise EmptyGroup(g)
        p, t = preds[mask], y[mask]
        out.append(
            GroupConfusion(
                group=g,
                tp=int(((p == 1) & (t == 1)).sum()),
                fp=int(((p == 1) & (t == 0)).sum()),
                tn=int(((p == 0) & (t == 0)).sum()),
                fn=int(((p == 0) & (t == 1)).sum()),
            )
        )
    return out[0], out[1]


def _eo_parts(g0: GroupConfusion, g1: GroupConfusion) -> tuple[float, bool]:
    gaps = []
    degraded = False
    for r0, r1 in ((g0.tpr, g1.tpr), (g0.fpr, g1.fpr)):
        if r0 is None or r1 is None:
            degraded = True
        else:
            gaps.append(abs(r1 - r0))
    return (max(gaps) if gaps else 0.0), degraded


def equalized_odds(preds, y, s) -> float:
    """max(|TPR gap|, |FPR gap|); gaps with an undefined rate are skipped
    (the audit report carries the degraded flag)."""
    g0, g1 = group_confusions(preds, y, s)
    eo, _ = _eo_parts(g0, g1)
    return eo


def audit(
    preds,
    y,
    s,
    thresholds: FairnessThresholds | None = None,
    fingerprint: str | None = None,
    label_dpd: float | None = None,
) -> FairnessReport:
    """Compute DPD and EO on hard labels and assign pass/warn/fail statuses.

    DPD passes at the deploy gate, warns in the (gate, warn] analysis band,
    and fails beyond; EO has no warn band. An undefined group rate degrades
    the report and forces the EO status to warn.
    """
    thresholds = thresholds or FairnessThresholds()
    g0, g1 = group_confusions(preds, y, s)
    dpd = demographic_parity_difference(preds, s)
    eo, degraded = _eo_parts(g0, g1)
    if dpd <= thresholds.dpd_gate:
        dpd_status = "pass"
    elif dpd <= thresholds.dpd_warn:
        dpd_status = "warn"
    else:
        dpd_status = "fail"
    eo_status = "pass" if eo <= thresholds.eo_gate else "fail"
    if degraded:
        eo_status = "warn"
    return FairnessReport(
        dpd=dpd,
        eo=eo,
        groups=(g0, g1),
        thresholds=thresholds,
        dpd_status=dpd_status,
        eo_status=eo_status,
        degraded=degraded,
        fingerprint=fingerprint,
        label_dpd=label_dpd,
    )


# -- reweighting ---------------------------------------------------------------


@dataclass(frozen=True)
class ReweightingPlan:
    counts: dict[tuple[int, int], int]  # (s, y) -> count
    p_joint: dict[tuple[int, int], float]
    p_s_given_y: dict[tuple[int, int], float]
    weights: np.ndarray
    normalization: float

    def to_jsonable(self) -> dict:
        return {
            "counts": {f"s={s},y={y}": c for (s, y), c in sorted(self.counts.items())},
            "p_joint": {f"s={s},y={y}": p for (s, y), p in sorted(self.p_joint.items())},
            "p_s_given_y": {f"s={s},y={y}": p for (s, y), p in sorted(self.p_s_given_y.items())},
            "normalization": self.normalization,
            "weights": self.weights.tolist(),
        }


def reweigh(y, s) -> ReweightingPlan:
    """Inverse conditional-frequency weights w_i = 1 / P(s_i | y_i),
    normalized to sum to n. Within each label class the two groups then carry
    equal weighted mass, and perfectly balanced data gets all-ones."""
    y = _as_binary(y, "labels")
    s = _as_binary(s, "sensitive attribute")
    n = y.size
    if n == 0:
        raise InputError("cannot reweigh an empty dataset")
    counts: dict[tuple[int, int], int] = {}
    for sv in (0, 1):
        for yv in (0, 1):
            c = int(((s == sv) & (y == yv)).sum())
            if c > 0:
                counts[(sv, yv)] = c
    p_joint = {k: c / n for k, c in counts.items()}
    n_y = {yv: int((y == yv).sum()) for yv in (0, 1)}
    p_s_given_y = {(sv, yv): c / n_y[yv] for (sv, yv), c in counts.items()}
    raw = np.array([1.0 / p_s_given_y[(int(sv), int(yv))] for sv, yv in zip(s, y)])
    factor = n / raw.sum()
    return ReweightingPlan(
        counts=counts,
        p_joint=p_joint,
        p_s_given_y=p_s_given_y,
        weights=raw * factor,
        normalization=float(factor),
    )


# -- adversarial debiasing -------------------------------------------------------


@dataclass
class DebiasResult:
    model: LogisticModel
    no_improvement: bool
    dpd_before: float
    dpd_after: float
    rounds: int


def _fit_adversary(z: np.ndarray, s: np.ndarray) -> tuple[float, float]:
    """Two-parameter logistic adversary predicting s from the main model's
    logit. Newton iterations on (a0, a1)."""
    a = np.zeros(2)
    A = np.column_stack([np.ones_like(z), z])
    for _ in range(100):
        p = _sigmoid(A @ a)
        grad = A.T @ (p - s) / z.size
        if np.abs(grad).max() < 1e-10:
            break
        D = p * (1.0 - p)
        H = (A.T * D) @ A / z.size
        H[np.diag_indices(2)] += 1e-8
        try:
            a = a - np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            a = a - 0.1 * grad
    return float(a[0]), float(a[1])


def adversarial_debias_logistic(
    X: np.ndarray,
    y: np.ndarray,
    s: np.ndarray,
    lam: float = 1.0,
    cfg: TrainConfig | None = None,
    rounds: int = 20,
) -> DebiasResult:
    """Alternating optimization: an adversary is refit to predict the
    sensitive attribute from the main model's logits, and the main model
    descends on its own loss minus lam times the adversary's loss. With
    lam=0 this is exactly ``train_logistic``."""
    cfg = cfg or TrainConfig.for_family("logistic")
    y = _as_binary(y, "labels").astype(np.float64)
    s = _as_binary(s, "sensitive attribute").astype(np.float64)
    base = train_logistic(X, y, None, cfg)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    w = np.ones(n)
    Xa = np.hstack([X, np.ones((n, 1))])

    def dpd_of(theta: np.ndarray) -> float:
        labels = (_sigmoid(Xa @ theta) >= cfg.threshold).astype(np.int64)
        return demographic_parity_difference(labels, s.astype(np.int64))

    theta = np.append(base.coef, base.intercept)
    dpd_before = dpd_of(theta)
    if lam == 0.0:
        return DebiasResult(base, False, dpd_before, dpd_before, 0)

    def penalized(theta: np.ndarray, a0: float, a1: float) -> tuple[float, np.ndarray]:
        main_loss, main_grad = logistic_objective(theta, Xa, y, w, cfg.C)
        z = Xa @ theta
        az = a0 + a1 * z
        adv_ce = float((np.logaddexp(0.0, az) - s * az).sum() / n)
        p_s = _sigmoid(az)
        adv_grad = Xa.T @ ((p_s - s) * a1) / n
        return main_loss - lam * adv_ce, main_grad - lam * adv_grad

    used_rounds = 0
    for _ in range(rounds):
        z = Xa @ theta
        a0, a1 = _fit_adversary(z, s)
        loss, grad = penalized(theta, a0, a1)
        if not math.isfinite(loss):
            raise NonfiniteLoss("adversarial objective became non-finite")
        moved = False
        for _ in range(10):  # a few descent steps against the fixed adversary
            if np.abs(grad).max() < 1e-9:
                break
            t = 0.5
            for _ in range(40):
                cand = theta - t * grad
                new_loss, new_grad = penalized(cand, a0, a1)
                if math.isfinite(new_loss) and new_loss < loss - 1e-14:
                    theta, loss, grad = cand, new_loss, new_grad
                    moved = True
                    break
                t *= 0.5
            else:
                break
        used_rounds += 1
        if not moved:
            break
    dpd_after = dpd_of(theta)
    model = LogisticModel(coef=theta[:-1].copy(), intercept=float(theta[-1]), config=cfg)
    return DebiasResult(
        model=model,
        no_improvement=bool(dpd_after > dpd_before + 1e-12),
        dpd_before=dpd_before,
        dpd_after=dpd_after,
        rounds=used_rounds,
    )
