"""Content-addressed model registry with Assurance Packs.

An entry's version id is the hash of (model, preprocessor, config); entries
are written to a temp directory, hash-verified, then renamed into place, so a
crash leaves either a complete verified entry or no entry at all. Partial
writes are quarantined, never registered. The attestation file is the only
artifact that carries a timestamp; everything else is bit-reproducible.
"""

from __future__ import annotations

import json
import os
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    HashCollision,
    InputError,
    MissingArtifact,
    PartialWrite,
    StageViolation,
)
from .hashing import canonical_json, hash_obj, sha256_hex

STAGES = ("candidate", "approved", "deployed", "retired")

MODEL_FILE = "model.json"
PREP_FILE = "preprocessor.json"
REPORT_FILE = "fairness_report.json"
SHAP_FILE = "shap_global.json"
CURVE_FILE = "decision_curve.csv"
CARD_FILE = "assurance/model_card.md"
SHEET_FILE = "assurance/datasheet.md"
ATTEST_FILE = "assurance/attestation.json"
MANIFEST_FILE = "manifest.json"
STAGE_FILE = "stage"


def version_id(model_doc: dict, prep_doc: dict) -> str:
    """Content hash over the model (config included) and preprocessor."""
    return hash_obj({"model": model_doc, "preprocessor": prep_doc})


@dataclass
class RegistryEntry:
    version: str
    path: Path
    stage: str
    manifest: dict[str, str]

    def artifact_path(self, name: str) -> Path:
        return self.path / name

    def read_json(self, name: str) -> dict:
        return json.loads((self.path / name).read_text(encoding="utf-8"))


def build_assurance_pack(
    model_doc: dict,
    prep_doc: dict,
    report_doc: dict,
    policy_doc: dict,
    decision_doc: dict,
    artifact_hashes: dict[str, str],
    data_meta: dict,
    perf: dict | None = None,
    timestamp: float | None = None,
) -> dict[str, str]:
    """Render the three assurance artifacts. Only the attestation embeds a
    timestamp; the card and datasheet are deterministic functions of their
    inputs. The entry must already carry its fairness report and global
    explanation artifact."""
    for path, kind in ((REPORT_FILE, "fairness_report"),
                       (SHAP_FILE, "shap_global")):
        if path not in artifact_hashes:
            raise MissingArtifact(kind)
    cfg = model_doc.get("config", {})
    card_lines = [
        "# Model Card",
        "",
        f"- family: {model_doc.get('family')}",
        f"- config: `{canonical_json(cfg)}`",
        f"- intended use: risk scoring gated by fairness policy"
        f" (DPD <= {policy_doc['gates']['dpd_max']},"
        f" EO <= {policy_doc['gates']['eo_max']})",
        "",
        "## Fairness",
        f"- DPD: {report_doc['dpd']:.6f} ({report_doc['dpd_status']})",
        f"- EO: {report_doc['eo']:.6f} ({report_doc['eo_status']})",
    ]
    if report_doc.get("label_dpd") is not None:
        card_lines.append(f"- raw label parity gap: {report_doc['label_dpd']:.6f}")
    if perf:
        card_lines += ["", "## Performance"]
        card_lines += [f"- {k}: {v:.6f}" for k, v in sorted(perf.items())
                       if v is not None]
    card = "\n".join(card_lines) + "\n"
    sheet_lines = [
        "# Datasheet",
        "",
        f"- dataset source: {data_meta.get('source', 'unspecified')}",
        f"- rows: {data_meta.get('rows', 'unspecified')}",
        f"- split seed: {data_meta.get('seed', 'unspecified')}",
        f"- split fractions: {data_meta.get('fractions', 'unspecified')}",
        f"- retraining data: {data_meta.get('retrain_data', 'original training split')}",
        "",
        "## Preprocessing",
        f"- numeric features: {sorted(prep_doc['medians'])}",
        f"- categorical features: {sorted(prep_doc['categories'])}",
        "- policy: train-median imputation, min-max scaling, one-hot with"
        " unknown categories ignored",
    ]
    sheet = "\n".join(sheet_lines) + "\n"
    attestation = canonical_json(
        {
            "policy_hash": hash_obj(policy_doc),
            "gate": decision_doc,
            "artifact_hashes": dict(sorted(artifact_hashes.items())),
            "timestamp": time.time() if timestamp is None else timestamp,
        }
    )
    return {CARD_FILE: card, SHEET_FILE: sheet, ATTEST_FILE: attestation}


class Registry:
    """Single-writer (lock file) directory tree of immutable version entries."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- locking ------------------------------------------------------------

    def _acquire_lock(self, timeout: float = 10.0) -> Path:
        lock = self.root / ".lock"
        deadline = time.monotonic() + timeout
        while True:
            try:
                fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode())
                os.close(fd)
                return lock
            except FileExistsError:
                if time.monotonic() > deadline:
                    raise PartialWrite(f"could not acquire registry lock {lock}")
                time.sleep(0.05)

    # -- reading -------------------------------------------------------------

    def entries(self) -> list[RegistryEntry]:
        out = []
        for child in sorted(self.root.iterdir()):
            if child.is_dir() and not child.name.startswith("."):
                out.append(self._load_entry(child))
        return out

    def get(self, version: str) -> RegistryEntry:
        path = self.root / version
        if not path.is_dir():
            raise InputError(f"no registry entry {version}")
        return self._load_entry(path)

    def _load_entry(self, path: Path) -> RegistryEntry:
        manifest = json.loads((path / MANIFEST_FILE).read_text(encoding="utf-8"))
        stage = (path / STAGE_FILE).read_text(encoding="utf-8").strip()
        return RegistryEntry(version=path.name, path=path, stage=stage,
                             manifest=manifest)

    def verify(self, version: str) -> list[str]:
        """Re-hash every artifact against the manifest and the attestation's
        recorded hashes. Returns a list of problems (empty means verified)."""
        entry = self.get(version)
        problems = []
        for rel, digest in entry.manifest.items():
            p = entry.path / rel
            if not p.exists():
                problems.append(f"missing artifact {rel}")
            elif sha256_hex(p.read_bytes()) != digest:
                problems.append(f"hash mismatch for {rel}")
        attest_path = entry.path / ATTEST_FILE
        if attest_path.exists():
            attest = json.loads(attest_path.read_text(encoding="utf-8"))
            for rel, digest in attest.get("artifact_hashes", {}).items():
                p = entry.path / rel
                if not p.exists():
                    problems.append(f"attested artifact missing: {rel}")
                elif sha256_hex(p.read_bytes()) != digest:
                    problems.append(f"attested hash mismatch for {rel}")
        return problems

    # -- writing -------------------------------------------------------------

    def register(
        self,
        model_doc: dict,
        prep_doc: dict,
        artifacts: dict[str, str | bytes],
        stage: str = "candidate",
        decision_doc: dict | None = None,
    ) -> RegistryEntry:
        """Write a content-addressed entry atomically.

        ``artifacts`` maps relative paths (fairness report, SHAP artifact,
        curve CSV, assurance files, ...) to their rendered content.
        Registering identical content again is a no-op returning the existing
        entry; promoting to approved/deployed requires a pass decision whose
        subject is this exact version.
        """
        if stage not in STAGES:
            raise InputError(f"unknown stage {stage!r}")
        version = version_id(model_doc, prep_doc)
        if stage in ("approved", "deployed"):
            self._check_promotion(version, decision_doc)
        lock = self._acquire_lock()
        try:
            final = self.root / version
            if final.exists():
                existing = self._load_entry(final)
                stored = json.loads((final / MODEL_FILE).read_text(encoding="utf-8"))
                stored_prep = json.loads((final / PREP_FILE).read_text(encoding="utf-8"))
                if canonical_json(stored) != canonical_json(model_doc) or \
                        canonical_json(stored_prep) != canonical_json(prep_doc):
                    raise HashCollision(f"version {version} exists with different content")
                return existing
            files: dict[str, bytes] = {
                MODEL_FILE: canonical_json(model_doc).encode(),
                PREP_FILE: canonical_json(prep_doc).encode(),
            }
            for rel, content in artifacts.items():
                files[rel] = content.encode() if isinstance(content, str) else content
            manifest = {rel: sha256_hex(data) for rel, data in sorted(files.items())}
            files[MANIFEST_FILE] = canonical_json(manifest).encode()
            files[STAGE_FILE] = stage.encode()
            tmp = self.root / f".tmp-{version}-{os.getpid()}"
            try:
                tmp.mkdir(parents=True)
                for rel, data in files.items():
                    target = tmp / rel
                    target.parent.mkdir(parents=True, exist_ok=True)
                    target.write_bytes(data)
                for rel, digest in manifest.items():
                    if sha256_hex((tmp / rel).read_bytes()) != digest:
                        raise PartialWrite(f"verification failed for {rel}")
                os.replace(tmp, final)
            except Exception as exc:
                quarantine = self.root / ".quarantine"
                quarantine.mkdir(exist_ok=True)
                if tmp.exists():
                    shutil.move(str(tmp), str(quarantine / f"{tmp.name}-{int(time.time()*1e6)}"))
                if isinstance(exc, PartialWrite):
                    raise
                raise PartialWrite(f"registering {version} failed: {exc}") from exc
            return self._load_entry(final)
        finally:
            lock.unlink(missing_ok=True)

    def _check_promotion(self, version: str, decision_doc: dict | None) -> None:
        if not decision_doc or decision_doc.get("verdict") != "pass":
            raise StageViolation(
                "approved/deployed stage requires a pass gate decision"
            )
        if decision_doc.get("subject") != version:
            raise StageViolation(
                "gate decision does not reference this version"
            )

    def set_stage(self, version: str, stage: str,
                  decision_doc: dict | None = None) -> RegistryEntry:
        """Stage transitions: 'approved' always requires a fresh pass decision
        for this version; 'deployed' requires the entry to already be
        approved (or a pass decision); demotions are unrestricted."""
        if stage not in STAGES:
            raise InputError(f"unknown stage {stage!r}")
        entry = self.get(version)
        if stage == "approved":
            self._check_promotion(version, decision_doc)
        elif stage == "deployed" and entry.stage not in ("approved", "deployed"):
            self._check_promotion(version, decision_doc)
        lock = self._acquire_lock()
        try:
            (entry.path / STAGE_FILE).write_text(stage, encoding="utf-8")
        finally:
            lock.unlink(missing_ok=True)
        return self._load_entry(entry.path)
