"""End-to-end orchestration: split, preprocess, train, audit, mitigate once
if blocked, gate, register with an Assurance Pack, and monitor for drift with
auto-retraining.

The flow mirrors the governance loop: a blocked baseline triggers exactly one
reweighting retrain; if the mitigated model still fails the gate the run ends
hard-blocked and nothing is registered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .drift import DriftReport, DriftSeries, ks_statistic
from .errors import EmptyGroup, InputError, NoDeployedModel
from .explain import shap_global
from .fairness import FairnessReport, audit, demographic_parity_difference, reweigh
from .governance import GateDecision, PolicyDocument, evaluate_gate
from .hashing import canonical_json, sha256_hex
from .models import (
    Model,
    PerfReport,
    TrainConfig,
    TreeEnsemble,
    evaluate,
    model_to_jsonable,
    predict,
    train_model,
)
from .registry import (
    CURVE_FILE,
    REPORT_FILE,
    SHAP_FILE,
    Registry,
    RegistryEntry,
    build_assurance_pack,
    version_id,
)
from .tabular import (
    DataTable,
    FittedPreprocessor,
    SplitPlan,
    fit_preprocessor,
    split_fingerprint,
    stratified_split,
    transform,
)
from .utility import decision_curve

NUMERIC_KINDS = ("numeric",)
PREDICTION_FEATURE = "__prediction__"


@dataclass
class PipelineResult:
    baseline_report: FairnessReport
    baseline_decision: GateDecision
    mitigated_report: FairnessReport | None
    final_decision: GateDecision
    final_model: Model
    preprocessor: FittedPreprocessor
    entry: RegistryEntry | None
    hard_block: bool
    mitigation_attempted: bool
    baseline_perf: PerfReport
    final_perf: PerfReport
    fingerprint: str

    def to_jsonable(self) -> dict:
        return {
            "verdict": self.final_decision.verdict,
            "hard_block": self.hard_block,
            "mitigation_attempted": self.mitigation_attempted,
            "baseline": {
                "dpd": self.baseline_report.dpd,
                "eo": self.baseline_report.eo,
                "verdict": self.baseline_decision.verdict,
                "accuracy": self.baseline_perf.accuracy,
            },
            "final": {
                "dpd": (self.mitigated_report or self.baseline_report).dpd,
                "eo": (self.mitigated_report or self.baseline_report).eo,
                "accuracy": self.final_perf.accuracy,
            },
            "version": self.entry.version if self.entry else None,
            "fingerprint": self.fingerprint,
        }


def _feature_windows(table: DataTable, model: Model,
                     prep: FittedPreprocessor) -> dict[str, np.ndarray]:
    """Everything drift is monitored on: numeric raw columns, per-category
    0/1 indicators (KS on indicators equals the absolute rate difference, so
    categoricals share the numeric gate), and predicted probabilities."""
    out: dict[str, np.ndarray] = {}
    for col in table.schema.feature_columns:
        if col.kind in NUMERIC_KINDS:
            values = [v for v in table.column(col.name) if v is not None]
            if values:
                out[col.name] = np.asarray(values, dtype=np.float64)
        elif col.name in prep.categories:
            raw = table.column(col.name)
            for cat in prep.categories[col.name]:
                out[f"{col.name}={cat}"] = np.asarray(
                    [1.0 if v is not None and str(v) == cat else 0.0
                     for v in raw])
    X = transform(prep, table).values
    out[PREDICTION_FEATURE] = predict(model, X).proba
    return out


def run_pipeline(
    table: DataTable,
    policy: PolicyDocument,
    cfg: TrainConfig,
    registry_root: str | Path | None = None,
    data_source: str = "unspecified",
) -> PipelineResult:
    """Full governance flow on one dataset.

    Audits run on the validation split at the policy's label threshold; a
    blocked baseline is retrained once with reweighting; passing models are
    registered as approved with fairness, SHAP, decision-curve, and assurance
    artifacts.
    """
    audited = table.schema.audited_sensitive.name
    if policy.protected_attribute is not None and policy.protected_attribute != audited:
        raise InputError(
            f"policy expects protected attribute {policy.protected_attribute!r} "
            f"but the schema audits {audited!r}"
        )
    plan = SplitPlan(seed=policy.seed)
    train_t, val_t, test_t = stratified_split(table, plan)
    prep = fit_preprocessor(train_t)
    fingerprint = split_fingerprint(table, plan, prep)
    Xtr = transform(prep, train_t).values
    Xv = transform(prep, val_t).values
    Xte = transform(prep, test_t).values
    cfg = TrainConfig(**{**cfg.to_jsonable(), "threshold": policy.label_threshold})

    label_gap = demographic_parity_difference(val_t.y(), val_t.s())
    baseline = train_model(Xtr, train_t.y(), None, cfg)
    baseline_preds = predict(baseline, Xv)
    baseline_report = audit(
        baseline_preds.label, val_t.y(), val_t.s(), policy.thresholds(),
        fingerprint=fingerprint, label_dpd=label_gap,
    )
    baseline_version = version_id(model_to_jsonable(baseline), prep.to_jsonable())
    baseline_decision = evaluate_gate(baseline_report, policy,
                                      subject=baseline_version)
    baseline_perf = evaluate(predict(baseline, Xte), test_t.y())

    mitigated_report = None
    mitigation_attempted = False
    final_model: Model = baseline
    final_report = baseline_report
    final_decision = baseline_decision
    if baseline_decision.verdict == "block":
        mitigation_attempted = True
        weights = reweigh(train_t.y(), train_t.s()).weights
        mitigated = train_model(Xtr, train_t.y(), weights, cfg)
        mitigated_preds = predict(mitigated, Xv)
        mitigated_report = audit(
            mitigated_preds.label, val_t.y(), val_t.s(), policy.thresholds(),
            fingerprint=fingerprint, label_dpd=label_gap,
        )
        mitigated_version = version_id(model_to_jsonable(mitigated),
                                       prep.to_jsonable())
        final_decision = evaluate_gate(mitigated_report, policy,
                                       subject=mitigated_version)
        final_model = mitigated
        final_report = mitigated_report
    final_perf = evaluate(predict(final_model, Xte), test_t.y())
    hard_block = final_decision.verdict == "block"

    entry = None
    if not hard_block and registry_root is not None:
        entry = _register_passing_model(
            registry=Registry(registry_root),
            model=final_model,
            prep=prep,
            report=final_report,
            decision=final_decision,
            policy=policy,
            perf=final_perf,
            Xte=Xte,
            Xv=Xv,
            y_val=val_t.y(),
            columns=transform(prep, test_t).columns,
            data_meta={
                "source": data_source,
                "rows": table.n,
                "seed": policy.seed,
                "fractions": list(plan.fractions),
            },
        )
    return PipelineResult(
        baseline_report=baseline_report,
        baseline_decision=baseline_decision,
        mitigated_report=mitigated_report,
        final_decision=final_decision,
        final_model=final_model,
        preprocessor=prep,
        entry=entry,
        hard_block=hard_block,
        mitigation_attempted=mitigation_attempted,
        baseline_perf=baseline_perf,
        final_perf=final_perf,
        fingerprint=fingerprint,
    )


def _register_passing_model(
    registry: Registry,
    model: Model,
    prep: FittedPreprocessor,
    report: FairnessReport,
    decision: GateDecision,
    policy: PolicyDocument,
    perf: PerfReport,
    Xte: np.ndarray,
    Xv: np.ndarray,
    y_val: np.ndarray,
    columns: tuple[str, ...],
    data_meta: dict,
) -> RegistryEntry:
    model_doc = model_to_jsonable(model)
    prep_doc = prep.to_jsonable()
    artifacts: dict[str, str] = {REPORT_FILE: report.to_json()}
    if isinstance(model, TreeEnsemble):
        shap_doc = shap_global(model, Xte[:300], columns=columns).to_jsonable()
    else:
        shap_doc = [
            {"model_hash": model.hash(), "feature": columns[i],
             "importance": abs(float(model.coef[i]))}
            for i in np.argsort(-np.abs(model.coef), kind="stable")
        ]
    artifacts[SHAP_FILE] = canonical_json(shap_doc)
    curve = decision_curve(predict(model, Xv).proba, y_val, band=policy.band,
                           model_id="final")
    artifacts[CURVE_FILE] = curve.to_csv()
    pack = build_assurance_pack(
        model_doc=model_doc,
        prep_doc=prep_doc,
        report_doc=report.to_jsonable(),
        policy_doc=policy.to_jsonable(),
        decision_doc=decision.to_jsonable(),
        artifact_hashes={
            path: sha256_hex(artifacts[path].encode("utf-8"))
            for path in (REPORT_FILE, SHAP_FILE, CURVE_FILE)
        },
        data_meta=data_meta,
        perf={k: v for k, v in perf.to_jsonable().items()},
    )
    artifacts.update(pack)
    return registry.register(model_doc, prep_doc, artifacts, stage="approved",
                             decision_doc=decision.to_jsonable())


# -- monitoring ---------------------------------------------------------------


@dataclass(frozen=True)
class RetrainEvent:
    day: int
    feature: str
    ks: float

    def to_jsonable(self) -> dict:
        return {"day": self.day, "feature": self.feature, "ks": self.ks}


@dataclass(frozen=True)
class MetricsSnapshot:
    day: int
    dpd: float | None
    eo: float | None
    max_ks: float
    stage: str

    def render(self) -> str:
        lines = [
            f"day={self.day}",
            f"dpd={'' if self.dpd is None else format(self.dpd, '.6f')}",
            f"eo={'' if self.eo is None else format(self.eo, '.6f')}",
            f"max_ks={self.max_ks:.6f}",
            f"stage={self.stage}",
        ]
        return "\n".join(lines) + "\n"


@dataclass
class MonitorState:
    version: str
    reference: dict[str, np.ndarray]
    reports: list[DriftReport] = field(default_factory=list)
    fairness_log: list[FairnessReport] = field(default_factory=list)
    day: int = 0
    retrain_count: int = 0


def make_monitor_state(registry: Registry, version: str, model: Model,
                       prep: FittedPreprocessor,
                       reference_table: DataTable) -> MonitorState:
    entry = registry.get(version)
    if entry.stage not in ("approved", "deployed"):
        raise NoDeployedModel(f"entry {version} is in stage {entry.stage!r}")
    return MonitorState(
        version=version,
        reference=_feature_windows(reference_table, model, prep),
    )


def monitor_tick(
    state: MonitorState,
    day_table: DataTable,
    policy: PolicyDocument,
    model: Model,
    prep: FittedPreprocessor,
    stage: str = "deployed",
) -> tuple[MonitorState, RetrainEvent | None, MetricsSnapshot]:
    """One daily batch: per-feature KS plus prediction-distribution KS
    against the deployment-time reference, and a fairness recheck on the
    day's labeled rows. A violation emits a retrain event; the caller decides
    whether to re-enter run_pipeline with accumulated data."""
    day = state.day
    windows = _feature_windows(day_table, model, prep)
    event = None
    max_ks = 0.0
    for name in state.reference:
        if name not in windows:
            continue
        ks = ks_statistic(state.reference[name], windows[name])
        triggered = bool(ks > policy.ks_max)
        state.reports.append(DriftReport(day=day, feature=name, ks=ks,
                                         triggered=triggered))
        max_ks = max(max_ks, ks)
        if triggered and event is None:
            event = RetrainEvent(day=day, feature=name, ks=ks)
    preds = predict(model, transform(prep, day_table).values)
    try:
        recheck = audit(preds.label, day_table.y(), day_table.s(),
                        policy.thresholds())
        state.fairness_log.append(recheck)
        dpd, eo = recheck.dpd, recheck.eo
    except EmptyGroup:
        dpd = eo = None  # day window missing one group: skip the recheck
    state.day += 1
    if event is not None:
        state.retrain_count += 1
    snapshot = MetricsSnapshot(day=day, dpd=dpd, eo=eo, max_ks=max_ks,
                               stage=stage)
    return state, event, snapshot


def drift_series_from_state(state: MonitorState, policy: PolicyDocument) -> DriftSeries:
    return DriftSeries(
        reports=list(state.reports),
        threshold=policy.ks_max,
        features=tuple(state.reference.keys()),
        n_days=state.day,
    )
