import json
import os

import numpy as np
import pytest

from fairgate.drift import DriftReport, DriftSeries
from fairgate.errors import (
    HashCollision,
    IncompatibleReport,
    InputError,
    InvalidThreshold,
    MalformedPolicy,
    PartialWrite,
    StageViolation,
)
from fairgate.fairness import FairnessThresholds, audit
from fairgate.governance import (
    PolicyDocument,
    evaluate_drift_gate,
    evaluate_gate,
    load_policy,
    policy_from_mapping,
)
from fairgate.hashing import canonical_json, sha256_hex
from fairgate.registry import (
    ATTEST_FILE,
    CARD_FILE,
    MANIFEST_FILE,
    REPORT_FILE,
    SHAP_FILE,
    SHEET_FILE,
    Registry,
    build_assurance_pack,
    version_id,
)


def make_report(dpd, eo, thresholds=None):
    """Small synthetic report with the requested headline metrics."""
    n = 200
    rng = np.random.default_rng(0)
    s = np.array([0, 1] * (n // 2))
    y = rng.integers(0, 2, n)
    preds = rng.integers(0, 2, n)
    report = audit(preds, y, s, thresholds or FairnessThresholds())
    return report.__class__(
        dpd=dpd, eo=eo, groups=report.groups,
        thresholds=report.thresholds, dpd_status=report.dpd_status,
        eo_status=report.eo_status, degraded=False, fingerprint="f",
    )


class TestPolicy:
    def test_empty_file_gives_published_defaults(self, tmp_path):
        p = tmp_path / "policy.yaml"
        p.write_text("", encoding="utf-8")
        policy = load_policy(p)
        assert policy.dpd_max == 0.05
        assert policy.eo_max == 0.05
        assert policy.dpd_warn == 0.10
        assert policy.ks_max == 0.20
        assert policy.band == (0.10, 0.20)
        assert policy.delta_nb_max == 0.001

    def test_warn_below_gate_rejected(self):
        with pytest.raises(InvalidThreshold):
            policy_from_mapping({"gates": {"dpd_max": 0.2},
                                 "audit": {"dpd_warn": 0.1}})

    def test_unknown_key_rejected(self):
        with pytest.raises(MalformedPolicy):
            policy_from_mapping({"gattes": {}})
        with pytest.raises(MalformedPolicy):
            policy_from_mapping({"gates": {"dpd_maximum": 0.05}})

    def test_non_numeric_threshold_rejected(self):
        with pytest.raises(MalformedPolicy):
            policy_from_mapping({"gates": {"dpd_max": "high"}})

    def test_full_policy_roundtrip_stable_hash(self, tmp_path):
        text = (
            "gates: {dpd_max: 0.04, eo_max: 0.06}\n"
            "audit: {dpd_warn: 0.12}\n"
            "drift: {ks_max: 0.25}\n"
            "utility: {band: [0.1, 0.2], delta_nb_max: 0.002}\n"
            "protected_attribute: sex\n"
            "label_threshold: 0.5\n"
            "seed: 42\n"
        )
        p = tmp_path / "policy.yaml"
        p.write_text(text, encoding="utf-8")
        a = load_policy(p)
        b = load_policy(p)
        assert a.hash() == b.hash()
        assert canonical_json(a.to_jsonable()) == canonical_json(b.to_jsonable())

    def test_missing_file_is_input_error(self):
        with pytest.raises(InputError):
            load_policy("/nonexistent/policy.yaml")


class TestFairnessGate:
    def test_pass_case(self):
        decision = evaluate_gate(make_report(0.04, 0.03), PolicyDocument())
        assert decision.verdict == "pass" and not decision.reasons

    def test_block_lists_every_violated_metric(self):
        decision = evaluate_gate(make_report(0.31, 0.08), PolicyDocument())
        assert decision.verdict == "block"
        assert {r.metric for r in decision.reasons} == {"dpd", "eo"}

    def test_boundary_value_passes_gate_is_strict(self):
        decision = evaluate_gate(make_report(0.05, 0.05), PolicyDocument())
        assert decision.verdict == "pass"

    def test_incompatible_thresholds_rejected(self):
        report = make_report(0.01, 0.01,
                             thresholds=FairnessThresholds(dpd_gate=0.2,
                                                           dpd_warn=0.3))
        with pytest.raises(IncompatibleReport):
            evaluate_gate(report, PolicyDocument())


def series(ks_values, threshold=0.20):
    reports = [DriftReport(day=d, feature="f", ks=ks, triggered=ks > threshold)
               for d, ks in enumerate(ks_values)]
    return DriftSeries(reports=reports, threshold=threshold, features=("f",),
                       n_days=len(ks_values))


class TestDriftGate:
    def test_below_threshold_passes(self):
        decision = evaluate_drift_gate(series([0.1, 0.18, 0.05]), PolicyDocument())
        assert decision.verdict == "pass"

    def test_violation_triggers_retrain_with_first_day(self):
        decision = evaluate_drift_gate(series([0.1, 0.25, 0.3]), PolicyDocument())
        assert decision.verdict == "retrain_required"
        assert "day1" in decision.reasons[0].metric

    def test_threshold_one_always_passes(self):
        policy = policy_from_mapping({"drift": {"ks_max": 1.0}})
        decision = evaluate_drift_gate(series([0.9, 0.99], threshold=1.0), policy)
        assert decision.verdict == "pass"


def minimal_entry_inputs():
    model_doc = {"family": "gbt", "config": {"n_estimators": 2}, "base_score": 0.0,
                 "mode": "additive-logit", "trees": []}
    prep_doc = {"schema_hash": "abc", "medians": {"x": 1.0}, "mins": {"x": 0.0},
                "maxs": {"x": 2.0}, "categories": {"c": ["a"]},
                "feature_names": ["x", "c=a"], "unknown_policy": "ignore"}
    report = make_report(0.04, 0.03)
    return model_doc, prep_doc, report


def full_artifacts(model_doc, prep_doc, report, policy, decision_doc):
    artifacts = {
        REPORT_FILE: report.to_json(),
        SHAP_FILE: canonical_json([{"feature": "x", "importance": 1.0,
                                    "model_hash": "m"}]),
        "decision_curve.csv": "t,nb_model,nb_treat_all,nb_treat_none\n",
    }
    pack = build_assurance_pack(
        model_doc, prep_doc, report.to_jsonable(), policy.to_jsonable(),
        decision_doc,
        artifact_hashes={rel: sha256_hex(artifacts[rel].encode())
                         for rel in (REPORT_FILE, SHAP_FILE)},
        data_meta={"source": "test", "rows": 10, "seed": 42},
        timestamp=1_700_000_000.0,
    )
    artifacts.update(pack)
    return artifacts


class TestRegistry:
    def setup_entry(self, tmp_path, stage="candidate", decision_doc=None):
        model_doc, prep_doc, report = minimal_entry_inputs()
        policy = PolicyDocument()
        version = version_id(model_doc, prep_doc)
        if decision_doc is None and stage in ("approved", "deployed"):
            decision_doc = evaluate_gate(report, policy, subject=version).to_jsonable()
        registry = Registry(tmp_path / "registry")
        artifacts = full_artifacts(model_doc, prep_doc, report, policy,
                                   decision_doc or {"verdict": "none"})
        entry = registry.register(model_doc, prep_doc, artifacts, stage=stage,
                                  decision_doc=decision_doc)
        return registry, entry, (model_doc, prep_doc, report, policy)

    def test_register_writes_complete_layout(self, tmp_path):
        registry, entry, _ = self.setup_entry(tmp_path, stage="approved")
        for rel in ("model.json", "preprocessor.json", REPORT_FILE, SHAP_FILE,
                    "decision_curve.csv", CARD_FILE, SHEET_FILE, ATTEST_FILE,
                    MANIFEST_FILE, "stage"):
            assert (entry.path / rel).exists(), rel
        assert entry.stage == "approved"

    def test_same_content_registered_twice_is_noop(self, tmp_path):
        registry, entry, (model_doc, prep_doc, report, policy) = \
            self.setup_entry(tmp_path)
        artifacts = full_artifacts(model_doc, prep_doc, report, policy,
                                   {"verdict": "none"})
        again = registry.register(model_doc, prep_doc, artifacts)
        assert again.version == entry.version
        assert len(registry.entries()) == 1

    def test_approve_without_pass_decision_raises(self, tmp_path):
        model_doc, prep_doc, report = minimal_entry_inputs()
        registry = Registry(tmp_path / "registry")
        blocked = {"verdict": "block", "subject": version_id(model_doc, prep_doc)}
        with pytest.raises(StageViolation):
            registry.register(model_doc, prep_doc,
                              {REPORT_FILE: report.to_json()},
                              stage="approved", decision_doc=blocked)

    def test_approve_with_wrong_subject_raises(self, tmp_path):
        model_doc, prep_doc, report = minimal_entry_inputs()
        registry = Registry(tmp_path / "registry")
        decision = {"verdict": "pass", "subject": "someone-else"}
        with pytest.raises(StageViolation):
            registry.register(model_doc, prep_doc,
                              {REPORT_FILE: report.to_json()},
                              stage="approved", decision_doc=decision)

    def test_verify_detects_tampering(self, tmp_path):
        registry, entry, _ = self.setup_entry(tmp_path, stage="approved")
        assert registry.verify(entry.version) == []
        (entry.path / REPORT_FILE).write_text("{}", encoding="utf-8")
        problems = registry.verify(entry.version)
        assert any(REPORT_FILE in p for p in problems)

    def test_attestation_hashes_reverify(self, tmp_path):
        registry, entry, _ = self.setup_entry(tmp_path, stage="approved")
        attest = json.loads((entry.path / ATTEST_FILE).read_text())
        for name, digest in attest["artifact_hashes"].items():
            assert isinstance(digest, str) and len(digest) == 64

    def test_crash_during_write_leaves_no_partial_entry(self, tmp_path, monkeypatch):
        model_doc, prep_doc, report = minimal_entry_inputs()
        registry = Registry(tmp_path / "registry")

        def boom(src, dst):
            raise OSError("simulated crash")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(PartialWrite):
            registry.register(model_doc, prep_doc,
                              {REPORT_FILE: report.to_json()})
        monkeypatch.undo()
        assert registry.entries() == []
        quarantine = registry.root / ".quarantine"
        assert quarantine.exists() and any(quarantine.iterdir())

    def test_hash_collision_detection(self, tmp_path):
        registry, entry, (model_doc, prep_doc, report, policy) = \
            self.setup_entry(tmp_path)
        (entry.path / "model.json").write_text(
            canonical_json({"family": "other"}), encoding="utf-8")
        with pytest.raises(HashCollision):
            registry.register(model_doc, prep_doc,
                              {REPORT_FILE: report.to_json()})

    def test_stage_transitions(self, tmp_path):
        registry, entry, (model_doc, prep_doc, report, policy) = \
            self.setup_entry(tmp_path)
        decision = evaluate_gate(report, policy,
                                 subject=entry.version).to_jsonable()
        promoted = registry.set_stage(entry.version, "approved",
                                      decision_doc=decision)
        assert promoted.stage == "approved"
        deployed = registry.set_stage(entry.version, "deployed")
        assert deployed.stage == "deployed"
        with pytest.raises(StageViolation):
            registry.set_stage(entry.version, "approved",
                               decision_doc={"verdict": "block"})

    def test_gate_soundness_scan(self, tmp_path):
        """No approved/deployed entry may carry a gate-violating report."""
        registry, entry, _ = self.setup_entry(tmp_path, stage="approved")
        policy = PolicyDocument()
        for e in registry.entries():
            if e.stage in ("approved", "deployed"):
                doc = e.read_json(REPORT_FILE)
                assert doc["dpd"] <= policy.dpd_max
                assert doc["eo"] <= policy.eo_max

    def test_assurance_pack_completeness_and_missing_artifact(self, tmp_path):
        from fairgate.errors import MissingArtifact

        model_doc, prep_doc, report = minimal_entry_inputs()
        pack = build_assurance_pack(
            model_doc, prep_doc, report.to_jsonable(),
            PolicyDocument().to_jsonable(), {"verdict": "pass"},
            artifact_hashes={REPORT_FILE: "0" * 64, SHAP_FILE: "1" * 64},
            data_meta={}, timestamp=0.0)
        assert set(pack) == {CARD_FILE, SHEET_FILE, ATTEST_FILE}
        with pytest.raises(MissingArtifact) as err:
            build_assurance_pack(
                model_doc, prep_doc, report.to_jsonable(),
                PolicyDocument().to_jsonable(), {"verdict": "pass"},
                artifact_hashes={REPORT_FILE: "0" * 64},
                data_meta={}, timestamp=0.0)
        assert err.value.kind == "shap_global"
