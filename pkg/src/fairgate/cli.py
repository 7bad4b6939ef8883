"""CI-oriented command line: every subcommand prints one JSON verdict on
stdout and logs on stderr, with exact exit-code semantics.

    0  success / gate pass
    2  fairness gate block
    3  drift retraining required
    4  input or configuration error
    1  internal error
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .drift import daily_drift
from .errors import FairgateError, InputError
from .explain import (counterfactual_delta, gain_importance,
                      render_counterfactual, shap_global, tree_shap)
from .fairness import FairnessReport, audit, reweigh
from .governance import (
    PolicyDocument,
    evaluate_drift_gate,
    evaluate_gate,
    load_policy,
)
from .hashing import canonical_json, jsonable
from .models import (
    TrainConfig,
    TreeEnsemble,
    model_from_jsonable,
    model_to_jsonable,
    predict,
    train_model,
)
from .pipeline import (
    drift_series_from_state,
    make_monitor_state,
    monitor_tick,
    run_pipeline,
)
from .registry import Registry
from .tabular import (
    DataTable,
    FittedPreprocessor,
    Schema,
    SplitPlan,
    fit_preprocessor,
    load_csv,
    stratified_split,
    transform,
    write_csv,
)
from .utility import band_report, decision_curve

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BLOCK = 2
EXIT_RETRAIN = 3
EXIT_INPUT = 4


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_table(args) -> DataTable:
    schema = Schema.from_json_file(args.schema)
    return load_csv(args.data, schema)


def _load_model(path: str):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"model file not found: {path}")
    except json.JSONDecodeError as e:
        raise InputError(f"model file {path} is not valid JSON: {e}")
    return model_from_jsonable(doc)


def _policy(args) -> PolicyDocument:
    return load_policy(args.policy)


def _registry(args) -> Registry:
    root = getattr(args, "registry", None) or os.environ.get("FAIRGATE_REGISTRY")
    if not root:
        raise InputError("no registry root: pass --registry or set FAIRGATE_REGISTRY")
    return Registry(root)


def _write_json(path: str | None, doc) -> None:
    if path:
        Path(path).write_text(canonical_json(doc), encoding="utf-8")


def _prep_for(args, table, model_path: str | None):
    """Resolve the preprocessor to use with a stored model: an explicit
    --preprocessor file, else the sibling written by `train`, else a fresh
    fit on the given table (only right when the table IS the training data).
    """
    explicit = getattr(args, "preprocessor", None)
    if explicit:
        candidates = [Path(explicit)]
    elif model_path:
        candidates = [Path(model_path).with_suffix(".preprocessor.json")]
    else:
        candidates = []
    for cand in candidates:
        if explicit and not cand.exists():
            raise InputError(f"preprocessor file not found: {cand}")
        if cand.exists():
            doc = json.loads(cand.read_text(encoding="utf-8"))
            return FittedPreprocessor.from_jsonable(doc)
    return fit_preprocessor(table)


# -- subcommand handlers (each returns (verdict_doc, exit_code)) -------------


def cmd_ingest(args):
    table = _load_table(args)
    doc = {
        "status": "ok",
        "rows": table.n,
        "columns": len(table.schema.columns),
        "schema_hash": table.schema.hash(),
        "prevalence": float(table.y().mean()) if table.n else None,
    }
    return doc, EXIT_OK


def cmd_split(args):
    table = _load_table(args)
    plan = SplitPlan(seed=args.seed)
    train_t, val_t, test_t = stratified_split(table, plan)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train_t), ("validation", val_t), ("test", test_t)):
        write_csv(part, out_dir / f"{name}.csv")
    doc = {
        "status": "ok",
        "seed": plan.seed,
        "counts": {"train": train_t.n, "validation": val_t.n, "test": test_t.n},
        "out_dir": str(out_dir),
    }
    return doc, EXIT_OK


def cmd_train(args):
    table = _load_table(args)
    prep = fit_preprocessor(table)
    X = transform(prep, table).values
    weights = None
    if args.weights:
        weights = np.asarray(json.loads(Path(args.weights).read_text()), dtype=float)
    cfg = TrainConfig.for_family(args.model_family, seed=args.seed)
    model = train_model(X, table.y(), weights, cfg)
    doc = {"status": "ok", "family": args.model_family,
           "model_hash": model.hash(), "train_rows": table.n}
    Path(args.out).write_text(canonical_json(model_to_jsonable(model)),
                              encoding="utf-8")
    prep_out = Path(args.out).with_suffix(".preprocessor.json")
    prep_out.write_text(canonical_json(prep.to_jsonable()), encoding="utf-8")
    doc["preprocessor"] = str(prep_out)
    return doc, EXIT_OK


def _audit_table(args, weights=None):
    table = _load_table(args)
    policy = _policy(args)
    prep = _prep_for(args, table, args.model)
    X = transform(prep, table).values
    if args.model:
        model = _load_model(args.model)
    else:
        cfg = TrainConfig.for_family(args.model_family, seed=policy.seed)
        model = train_model(X, table.y(), weights, cfg)
    preds = predict(model, X)
    report = audit(preds.label, table.y(), table.s(), policy.thresholds(),
                   fingerprint=table.fingerprint())
    return table, policy, model, report


def cmd_audit(args):
    _, policy, model, report = _audit_table(args)
    _write_json(args.out, report.to_jsonable())
    if args.plot_data:
        _write_json(args.plot_data, {
            "dpd": report.dpd, "eo": report.eo,
            "dpd_warn": policy.dpd_warn, "dpd_gate": policy.dpd_max,
            "eo_gate": policy.eo_max,
        })
    doc = {"status": "ok", "dpd": report.dpd, "eo": report.eo,
           "dpd_status": report.dpd_status, "eo_status": report.eo_status}
    return doc, EXIT_OK


def cmd_mitigate(args):
    table = _load_table(args)
    policy = _policy(args)
    plan = reweigh(table.y(), table.s())
    prep = fit_preprocessor(table)
    X = transform(prep, table).values
    cfg = TrainConfig.for_family(args.model_family, seed=policy.seed)
    model = train_model(X, table.y(), plan.weights, cfg)
    preds = predict(model, X)
    report = audit(preds.label, table.y(), table.s(), policy.thresholds(),
                   fingerprint=table.fingerprint())
    Path(args.out).write_text(canonical_json(model_to_jsonable(model)),
                              encoding="utf-8")
    if args.report:
        _write_json(args.report, report.to_jsonable())
    doc = {"status": "ok", "model_hash": model.hash(), "dpd": report.dpd,
           "eo": report.eo, "weights_sum": float(plan.weights.sum())}
    return doc, EXIT_OK


def cmd_explain(args):
    table = _load_table(args)
    model = _load_model(args.model)
    if not isinstance(model, TreeEnsemble):
        raise InputError("explain requires a tree ensemble model")
    prep = _prep_for(args, table, args.model)
    fm = transform(prep, table)
    global_imp = shap_global(model, fm.values[:300], columns=fm.columns)
    _write_json(args.out, global_imp.to_jsonable())
    doc = {
        "status": "ok",
        "sample": int(min(300, fm.n)),
        "top_feature": fm.columns[global_imp.ranking[0]],
        "gain_top_feature": fm.columns[gain_importance(model, fm.columns).ranking[0]],
    }
    if args.instance is not None:
        exp = tree_shap(model, fm.values[args.instance])
        doc["instance"] = exp.to_jsonable()
        doc["local_accuracy_gap"] = abs(exp.base_value + float(exp.phi.sum()) - exp.fx)
        if args.counterfactual:
            cf = counterfactual_delta(
                model, prep, table, args.instance, args.counterfactual,
                direction="decrease", step=args.cf_step)
            doc["counterfactual"] = cf.to_jsonable()
            doc["counterfactual_text"] = render_counterfactual(cf)
    return doc, EXIT_OK


def cmd_gate(args):
    policy = _policy(args)
    try:
        report_doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"report file not found: {args.report}")
    except json.JSONDecodeError as e:
        raise InputError(f"report file is not valid JSON: {e}")
    report = FairnessReport.from_jsonable(report_doc)
    decision = evaluate_gate(report, policy)
    doc = {"status": decision.verdict, "verdict": decision.verdict,
           "reasons": [r.to_jsonable() for r in decision.reasons],
           "policy_hash": decision.policy_hash}
    return doc, EXIT_OK if decision.verdict == "pass" else EXIT_BLOCK


def cmd_dca(args):
    table = _load_table(args)
    policy = _policy(args)
    prep = _prep_for(args, table, args.model)
    X = transform(prep, table).values
    model = _load_model(args.model)
    curve = decision_curve(predict(model, X).proba, table.y(), band=policy.band,
                           model_id="model")
    if args.out:
        curve.write_csv(args.out)
    doc = {"status": "ok", "prevalence": curve.prevalence,
           "nb_at_band": {f"{p.threshold:.2f}": p.nb for p in curve.band_points()}}
    if args.baseline_model:
        base = _load_model(args.baseline_model)
        base_curve = decision_curve(predict(base, X).proba, table.y(),
                                    band=policy.band, model_id="baseline")
        comparison = band_report(base_curve, curve, bound=policy.delta_nb_max)
        doc["band_report"] = comparison.to_jsonable()
        if args.band_report:
            _write_json(args.band_report, comparison.to_jsonable())
    return doc, EXIT_OK


def cmd_drift(args):
    policy = _policy(args)
    schema = Schema.from_json_file(args.schema)
    reference = load_csv(args.reference, schema)

    def windows(table):
        out = {}
        for col in schema.feature_columns:
            if col.kind == "numeric":
                vals = [v for v in table.column(col.name) if v is not None]
                if vals:
                    out[col.name] = np.asarray(vals, dtype=float)
            elif col.kind == "categorical":
                raw = table.column(col.name)
                cats = col.categories or sorted(
                    {str(v) for v in reference.column(col.name) if v is not None})
                for cat in cats:
                    out[f"{col.name}={cat}"] = np.asarray(
                        [1.0 if v is not None and str(v) == cat else 0.0
                         for v in raw])
        return out

    ref_windows = windows(reference)
    days = [windows(load_csv(day_path, schema)) for day_path in args.days]
    series = daily_drift(ref_windows, days, threshold=policy.ks_max)
    if args.out:
        series.write_jsonl(args.out)
    if args.plot_data:
        _write_json(args.plot_data, series.plot_data())
    decision = evaluate_drift_gate(series, policy)
    doc = {"status": decision.verdict, "verdict": decision.verdict,
           "max_ks": series.max_ks(),
           "reasons": [r.to_jsonable() for r in decision.reasons]}
    return doc, EXIT_OK if decision.verdict == "pass" else EXIT_RETRAIN


def cmd_monitor(args):
    table = _load_table(args)
    policy = _policy(args)
    registry = _registry(args)
    result = run_pipeline(table, policy, TrainConfig.for_family(
        args.model_family, seed=policy.seed), registry_root=registry.root,
        data_source=args.data)
    if result.entry is None:
        doc = {"status": "block", "verdict": "block",
               "detail": "pipeline hard-blocked; nothing to monitor"}
        return doc, EXIT_BLOCK
    registry.set_stage(result.entry.version, "deployed",
                       decision_doc=result.final_decision.to_jsonable())
    plan = SplitPlan(seed=policy.seed)
    train_t, _, _ = stratified_split(table, plan)
    state = make_monitor_state(registry, result.entry.version,
                               result.final_model, result.preprocessor, train_t)
    rng = np.random.default_rng([policy.seed, 0xD21F])
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    events = []
    for day in range(args.days):
        idx = rng.integers(0, train_t.n, size=args.window)
        day_table = train_t.subset(idx)
        if args.shift_day is not None and day >= args.shift_day:
            day_table = _shift_numeric(day_table, args.shift_feature,
                                       args.shift_size)
        state, event, snapshot = monitor_tick(state, day_table, policy,
                                              result.final_model,
                                              result.preprocessor)
        if out_dir:
            (out_dir / f"metrics_day{day:03d}.txt").write_text(
                snapshot.render(), encoding="utf-8")
        if event:
            events.append(event.to_jsonable())
            _log(f"day {day}: retrain event on {event.feature} (ks={event.ks:.3f})")
    series = drift_series_from_state(state, policy)
    if out_dir:
        series.write_jsonl(out_dir / "drift_log.jsonl")
    doc = {
        "status": "retrain_required" if events else "pass",
        "verdict": "retrain_required" if events else "pass",
        "days": args.days,
        "version": result.entry.version,
        "max_ks": series.max_ks(),
        "events": events,
    }
    return doc, EXIT_RETRAIN if events else EXIT_OK


def _shift_numeric(table: DataTable, feature: str | None, size: float) -> DataTable:
    feature = feature or next(
        c.name for c in table.schema.feature_columns if c.kind == "numeric")
    idx = table.schema.index(feature)
    values = [v for v in table.column(feature) if v is not None]
    sd = float(np.std(values)) if values else 1.0
    rows = []
    for row in table.rows:
        cells = list(row)
        if cells[idx] is not None:
            cells[idx] = cells[idx] + size * sd
        rows.append(tuple(cells))
    return DataTable(table.schema, rows)


def cmd_pipeline(args):
    table = _load_table(args)
    policy = _policy(args)
    cfg = TrainConfig.for_family(args.model_family, seed=policy.seed)
    registry_root = getattr(args, "registry", None) or os.environ.get("FAIRGATE_REGISTRY")
    result = run_pipeline(table, policy, cfg, registry_root=registry_root,
                          data_source=args.data)
    doc = {"status": result.final_decision.verdict}
    doc.update(result.to_jsonable())
    if args.baseline_report:
        _write_json(args.baseline_report, result.baseline_report.to_jsonable())
    if args.final_report:
        final = result.mitigated_report or result.baseline_report
        _write_json(args.final_report, final.to_jsonable())
    return doc, EXIT_OK if result.final_decision.verdict == "pass" else EXIT_BLOCK


def cmd_registry(args):
    registry = _registry(args)
    if args.registry_cmd == "list":
        doc = {"status": "ok", "entries": [
            {"version": e.version, "stage": e.stage} for e in registry.entries()
        ]}
        return doc, EXIT_OK
    if args.registry_cmd == "show":
        entry = registry.get(args.version)
        doc = {"status": "ok", "version": entry.version, "stage": entry.stage,
               "manifest": entry.manifest}
        return doc, EXIT_OK
    problems = registry.verify(args.version)
    doc = {"status": "ok" if not problems else "corrupt",
           "version": args.version, "problems": problems}
    if problems:
        raise FairgateError(f"registry entry {args.version} failed verification: "
                            + "; ".join(problems))
    return doc, EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairgate",
        description="Fairness-gated training, auditing, explanation, drift "
                    "monitoring, and registry governance for tabular risk models.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data(p):
        p.add_argument("--data", required=True, help="CSV dataset path")
        p.add_argument("--schema", required=True, help="JSON schema path")

    p = sub.add_parser("ingest", help="validate a dataset against its schema")
    add_data(p)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("split", help="write the stratified 60/20/20 split")
    add_data(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("train", help="fit a model on the given table")
    add_data(p)
    p.add_argument("--model-family", choices=("logistic", "gbt", "rf"),
                   default="gbt")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--weights", help="JSON array of instance weights")
    p.add_argument("--out", required=True, help="model JSON output path")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("audit", help="fairness audit of model predictions")
    add_data(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--model", help="model JSON (otherwise trains fresh)")
    p.add_argument("--preprocessor",
                   help="preprocessor JSON (default: the model's sibling file)")
    p.add_argument("--model-family", choices=("logistic", "gbt", "rf"),
                   default="gbt")
    p.add_argument("--out", help="write the fairness report JSON here")
    p.add_argument("--plot-data", help="write bar-chart plot data JSON here")
    p.set_defaults(handler=cmd_audit)

    p = sub.add_parser("mitigate", help="reweigh and retrain")
    add_data(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--model-family", choices=("logistic", "gbt", "rf"),
                   default="gbt")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write the post-mitigation audit here")
    p.set_defaults(handler=cmd_mitigate)

    p = sub.add_parser("explain", help="SHAP global artifact (+ local on demand)")
    add_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--preprocessor",
                   help="preprocessor JSON (default: the model's sibling file)")
    p.add_argument("--out", help="global importance JSON output")
    p.add_argument("--instance", type=int, help="row index for a local explanation")
    p.add_argument("--counterfactual", metavar="FEATURE",
                   help="emit a counterfactual statement for this numeric feature")
    p.add_argument("--cf-step", type=float, default=1.0,
                   help="counterfactual grid step in original units")
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser("gate", help="evaluate the deployment gate on a report")
    p.add_argument("--report", required=True)
    p.add_argument("--policy", required=True)
    p.set_defaults(handler=cmd_gate)

    p = sub.add_parser("dca", help="decision-curve analysis export")
    add_data(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--preprocessor",
                   help="preprocessor JSON (default: the model's sibling file)")
    p.add_argument("--baseline-model", help="second model for the band comparison")
    p.add_argument("--out", help="curve CSV output")
    p.add_argument("--band-report", help="band comparison JSON output")
    p.set_defaults(handler=cmd_dca)

    p = sub.add_parser("drift", help="daily KS drift against a reference CSV")
    p.add_argument("--schema", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--days", nargs="+", required=True, help="daily CSV windows")
    p.add_argument("--out", help="JSONL drift log output")
    p.add_argument("--plot-data", help="day-level max-KS JSON output")
    p.set_defaults(handler=cmd_drift)

    p = sub.add_parser("monitor", help="batch monitoring simulation")
    add_data(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--registry")
    p.add_argument("--model-family", choices=("logistic", "gbt", "rf"),
                   default="gbt")
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--shift-day", type=int, help="inject drift from this day on")
    p.add_argument("--shift-feature")
    p.add_argument("--shift-size", type=float, default=1.5,
                   help="shift in reference SDs")
    p.add_argument("--out-dir", help="metrics snapshots and drift log directory")
    p.set_defaults(handler=cmd_monitor)

    p = sub.add_parser("pipeline", help="full audit->mitigate->gate->register run")
    add_data(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--registry")
    p.add_argument("--model-family", choices=("logistic", "gbt", "rf"),
                   default="gbt")
    p.add_argument("--baseline-report", help="write the baseline audit JSON here")
    p.add_argument("--final-report", help="write the final audit JSON here")
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("registry", help="inspect or verify registry entries")
    reg_sub = p.add_subparsers(dest="registry_cmd", required=True)
    for name in ("list", "show", "verify"):
        rp = reg_sub.add_parser(name)
        rp.add_argument("--registry")
        if name != "list":
            rp.add_argument("version")
        rp.set_defaults(handler=cmd_registry)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse already printed usage to stderr; emit a JSON verdict too
        if e.code == 0:
            return EXIT_OK
        print(json.dumps({"status": "error", "error": "ArgumentError",
                          "message": "invalid arguments"}), flush=True)
        return EXIT_INPUT
    try:
        doc, code = args.handler(args)
    except InputError as e:
        print(json.dumps({"status": "error", "error": type(e).__name__,
                          "message": str(e)}), flush=True)
        return EXIT_INPUT
    except FairgateError as e:
        print(json.dumps({"status": "error", "error": type(e).__name__,
                          "message": str(e)}), flush=True)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001 - map truly unexpected failures to 1
        print(json.dumps({"status": "error", "error": type(e).__name__,
                          "message": str(e)}), flush=True)
        return EXIT_INTERNAL
    print(json.dumps(jsonable(doc)), flush=True)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
