"""Policy documents and the deployment and drift gates they drive.

Thresholds live in a YAML policy document, never in code. Gate comparisons
are strict: a metric exactly at its limit passes, and deployment is blocked
only when DPD or EO exceed their maxima. Drift violations yield a
retrain_required verdict rather than a block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .drift import DriftSeries
from .errors import (
    IncompatibleReport,
    InputError,
    InvalidThreshold,
    MalformedPolicy,
)
from .fairness import FairnessReport, FairnessThresholds
from .hashing import hash_obj

_POLICY_KEYS = {
    "gates": {"dpd_max", "eo_max"},
    "audit": {"dpd_warn"},
    "drift": {"ks_max"},
    "utility": {"band", "delta_nb_max"},
}
_TOP_KEYS = set(_POLICY_KEYS) | {"protected_attribute", "label_threshold", "seed"}


@dataclass(frozen=True)
class PolicyDocument:
    dpd_max: float = 0.05
    eo_max: float = 0.05
    dpd_warn: float = 0.10
    ks_max: float = 0.20
    band: tuple[float, float] = (0.10, 0.20)
    delta_nb_max: float = 0.001
    protected_attribute: str | None = None
    label_threshold: float = 0.5
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.dpd_max <= self.dpd_warn <= 1.0:
            raise InvalidThreshold("gates.dpd_max",
                                   "need 0 < dpd_max <= dpd_warn <= 1")
        for key, value in (("gates.eo_max", self.eo_max),
                           ("drift.ks_max", self.ks_max),
                           ("utility.delta_nb_max", self.delta_nb_max)):
            if not 0.0 < value <= 1.0:
                raise InvalidThreshold(key, "must be in (0, 1]")
        if not 0.0 < self.band[0] < self.band[1] < 1.0:
            raise InvalidThreshold("utility.band", "must be ordered within (0, 1)")
        if not 0.0 < self.label_threshold < 1.0:
            raise InvalidThreshold("label_threshold", "must be in (0, 1)")

    def thresholds(self) -> FairnessThresholds:
        return FairnessThresholds(dpd_gate=self.dpd_max, dpd_warn=self.dpd_warn,
                                  eo_gate=self.eo_max)

    def to_jsonable(self) -> dict:
        return {
            "gates": {"dpd_max": self.dpd_max, "eo_max": self.eo_max},
            "audit": {"dpd_warn": self.dpd_warn},
            "drift": {"ks_max": self.ks_max},
            "utility": {"band": list(self.band), "delta_nb_max": self.delta_nb_max},
            "protected_attribute": self.protected_attribute,
            "label_threshold": self.label_threshold,
            "seed": self.seed,
        }

    def hash(self) -> str:
        return hash_obj(self.to_jsonable())


def _require_number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedPolicy(key, f"expected a number, got {value!r}")
    return float(value)


def policy_from_mapping(doc: Mapping | None) -> PolicyDocument:
    doc = doc or {}
    if not isinstance(doc, Mapping):
        raise MalformedPolicy("<root>", "policy document must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise MalformedPolicy(sorted(unknown)[0], "unknown policy key")
    kwargs: dict = {}
    for section, keys in _POLICY_KEYS.items():
        sub = doc.get(section) or {}
        if not isinstance(sub, Mapping):
            raise MalformedPolicy(section, "expected a mapping")
        bad = set(sub) - keys
        if bad:
            raise MalformedPolicy(f"{section}.{sorted(bad)[0]}", "unknown policy key")
        for key in keys:
            if key not in sub:
                continue
            if key == "band":
                band = sub[key]
                if (not isinstance(band, Sequence) or isinstance(band, str)
                        or len(band) != 2):
                    raise MalformedPolicy("utility.band", "expected [low, high]")
                kwargs["band"] = (
                    _require_number(band[0], "utility.band"),
                    _require_number(band[1], "utility.band"),
                )
            else:
                kwargs[key] = _require_number(sub[key], f"{section}.{key}")
    if "protected_attribute" in doc and doc["protected_attribute"] is not None:
        if not isinstance(doc["protected_attribute"], str):
            raise MalformedPolicy("protected_attribute", "expected a string")
        kwargs["protected_attribute"] = doc["protected_attribute"]
    if "label_threshold" in doc:
        kwargs["label_threshold"] = _require_number(doc["label_threshold"],
                                                    "label_threshold")
    if "seed" in doc:
        seed = doc["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise MalformedPolicy("seed", "expected an integer")
        kwargs["seed"] = seed
    return PolicyDocument(**kwargs)


def load_policy(path: str | Path) -> PolicyDocument:
    """Parse a YAML policy file; absent keys take the published defaults, so
    an empty file yields the standard gates (0.05/0.05/0.10/0.20)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"policy file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise MalformedPolicy("<root>", f"invalid YAML: {e}")
    return policy_from_mapping(doc)


# -- gate decisions ----------------------------------------------------------


@dataclass(frozen=True)
class GateReason:
    metric: str
    value: float
    threshold: float

    def to_jsonable(self) -> dict:
        return {"metric": self.metric, "value": self.value,
                "threshold": self.threshold}


@dataclass(frozen=True)
class GateDecision:
    verdict: str  # pass | block | retrain_required
    reasons: tuple[GateReason, ...]
    policy_hash: str
    report_hash: str
    subject: str | None = None  # version id the decision refers to

    def to_jsonable(self) -> dict:
        return {
            "verdict": self.verdict,
            "reasons": [r.to_jsonable() for r in self.reasons],
            "policy_hash": self.policy_hash,
            "report_hash": self.report_hash,
            "subject": self.subject,
        }


def evaluate_gate(report: FairnessReport, policy: PolicyDocument,
                  subject: str | None = None) -> GateDecision:
    """Deployment gate: block iff DPD or EO strictly exceed their maxima.
    Values exactly at the gate pass."""
    th = report.thresholds
    if not (math.isclose(th.dpd_gate, policy.dpd_max)
            and math.isclose(th.eo_gate, policy.eo_max)):
        raise IncompatibleReport(
            "report was audited against different gate thresholds than the policy"
        )
    reasons = []
    if report.dpd > policy.dpd_max:
        reasons.append(GateReason("dpd", report.dpd, policy.dpd_max))
    if report.eo > policy.eo_max:
        reasons.append(GateReason("eo", report.eo, policy.eo_max))
    return GateDecision(
        verdict="block" if reasons else "pass",
        reasons=tuple(reasons),
        policy_hash=policy.hash(),
        report_hash=report.hash(),
        subject=subject,
    )


def evaluate_drift_gate(series: DriftSeries, policy: PolicyDocument,
                        subject: str | None = None) -> GateDecision:
    """Retraining gate: retrain_required iff any (day, feature) KS exceeds
    the policy maximum; the first violation is recorded as the reason."""
    if not series.reports:
        raise InputError("drift series is empty")
    reasons = []
    for r in series.reports:
        if r.ks > policy.ks_max:
            reasons.append(GateReason(f"ks:{r.feature}@day{r.day}", r.ks,
                                      policy.ks_max))
            break
    return GateDecision(
        verdict="retrain_required" if reasons else "pass",
        reasons=tuple(reasons),
        policy_hash=policy.hash(),
        report_hash=hash_obj([rep.to_jsonable() for rep in series.reports]),
        subject=subject,
    )
