"""Pipeline orchestration: each stage is a subcommand writing an artifact
plus a machine-readable JSON summary next to it."""

from __future__ import annotations

import argparse
import json
import sys
import urllib.parse
from pathlib import Path

from . import classifier as clf
from . import features as ft
from . import filterlist as fl
from . import graph as g
from . import surrogate as su
from . import trace_model as tm


def _read_log(args) -> tuple[tm.TraceLog, list[tm.Diagnostic]]:
    data = Path(args.traces).read_bytes()
    log, diagnostics = tm.scan_trace_log(data)
    if getattr(args, "scripts", None):
        log = log.with_sources(tm.load_script_sources(args.scripts))
    return log, diagnostics


def _write_summary(out_dir: Path, stage: str, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stage}.summary.json").write_text(
        json.dumps({"stage": stage, **payload}, indent=2, sort_keys=True) + "\n"
    )


def cmd_ingest(args) -> int:
    log, diagnostics = _read_log(args)
    out = Path(args.out)
    _write_summary(
        out,
        "ingest",
        {
            "page_url": log.page_url,
            "events": len(log.events),
            "diagnostics": [str(d.error) for d in diagnostics],
            "missing_sources": sorted(tm.missing_sources(log)),
        },
    )
    return 0


def cmd_graph(args) -> int:
    log, diagnostics = _read_log(args)
    graph = g.build_graph(log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "graph.txt").write_text(g.dump_graph(graph))
    _write_summary(
        out,
        "graph",
        {
            "nodes": graph.num_nodes,
            "edges": graph.num_edges,
            "function_nodes": len(g.function_nodes(graph)),
            "skipped_stackless": graph.skipped_stackless,
            "diagnostics": len(diagnostics),
        },
    )
    return 0


def cmd_features(args) -> int:
    log, _ = _read_log(args)
    graph = g.build_graph(log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "features.csv", "w", newline="") as fh:
        rows = ft.write_feature_matrix(graph, fh)
    _write_summary(
        out,
        "features",
        {"rows": rows, "schema_version": ft.SCHEMA_VERSION, "features": len(ft.FEATURE_NAMES)},
    )
    return 0


def _load_rules(path: str) -> fl.RuleSet:
    return fl.parse_rules(Path(path).read_text(encoding="utf-8"))


def cmd_label(args) -> int:
    log, _ = _read_log(args)
    graph = g.build_graph(log)
    ruleset = _load_rules(args.filters)
    labels = fl.label_functions(log, graph, ruleset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "labels.jsonl", "w") as fh:
        for label in labels:
            fn = label.function
            fh.write(
                json.dumps(
                    {
                        "node": label.node,
                        "label": label.label,
                        "script_url": fn.script_url,
                        "function_name": fn.function_name,
                        "line": fn.line,
                        "column": fn.column,
                        "context_hash": fn.context_hash,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    counts = {name: 0 for name in (fl.TRACKING, fl.NON_TRACKING, fl.EXCLUDED)}
    for label in labels:
        counts[label.label] += 1
    _write_summary(out, "label", {"labels": counts, "rules": len(ruleset)})
    return 0


def _dataset_from_log(log: tm.TraceLog, ruleset: fl.RuleSet) -> clf.Dataset:
    graph = g.build_graph(log)
    labels = {l.node: l.label for l in fl.label_functions(log, graph, ruleset)}
    rows = []
    for nid, node, fv in ft.extract_all(graph):
        if labels[nid] == fl.EXCLUDED:
            continue
        rows.append((node.script_url + "::" + node.function_name, fv, labels[nid]))
    return clf.dataset_from_rows(rows)


def cmd_train(args) -> int:
    log, _ = _read_log(args)
    ruleset = _load_rules(args.filters)
    dataset = clf.deduplicate(_dataset_from_log(log, ruleset))
    if len(dataset) == 0:
        print("no labeled functions to train on", file=sys.stderr)
        return 1
    params = clf.ForestParams(num_trees=args.trees, max_depth=args.depth, seed=args.seed)
    train_set, _val, test_set = clf.split(dataset, seed=args.seed)
    forest = clf.train(train_set if len(train_set) else dataset, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(clf.forest_to_json(forest))
    summary = {
        "rows": len(dataset),
        "train": len(train_set),
        "test": len(test_set),
        "trees": params.num_trees,
        "depth": params.max_depth,
        "seed": params.seed,
    }
    if len(test_set):
        metrics = clf.evaluate(forest, test_set)
        summary["metrics"] = {
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
            "tp": metrics.tp,
            "fp": metrics.fp,
            "tn": metrics.tn,
            "fn": metrics.fn,
        }
    _write_summary(out, "train", summary)
    return 0


def cmd_classify(args) -> int:
    log, _ = _read_log(args)
    graph = g.build_graph(log)
    forest = clf.forest_from_json(Path(args.model).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = 0
    tracking = 0
    with open(out / "predictions.jsonl", "w") as fh:
        for nid, node, fv in ft.extract_all(graph):
            label, score = clf.predict(forest, fv)
            tracking += label == fl.TRACKING
            fh.write(
                json.dumps(
                    {
                        "node": nid,
                        "script_url": node.script_url,
                        "function_name": node.function_name,
                        "line": node.line,
                        "column": node.column,
                        "label": label,
                        "score": score,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            rows += 1
    _write_summary(out, "classify", {"rows": rows, "tracking": tracking})
    return 0


def _tracking_sites(log: tm.TraceLog, args) -> list[su.CallSite]:
    graph = g.build_graph(log)
    if args.model:
        forest = clf.forest_from_json(Path(args.model).read_text())
        tracked = [
            node
            for _nid, node, fv in ft.extract_all(graph)
            if clf.predict(forest, fv)[0] == fl.TRACKING
        ]
    else:
        ruleset = _load_rules(args.filters)
        tracked = [
            label.function
            for label in fl.label_functions(log, graph, ruleset)
            if label.label == fl.TRACKING
        ]
    return [
        su.CallSite(fn.script_url, fn.function_name, fn.line, fn.column)
        for fn in tracked
    ]


def cmd_surrogate(args) -> int:
    log, _ = _read_log(args)
    if not args.model and not args.filters:
        print("surrogate requires --model or --filters", file=sys.stderr)
        return 1
    sites = _tracking_sites(log, args)
    surrogates, report = su.generate_surrogates(log.script_sources, sites)
    out = Path(args.out)
    scripts_dir = out / "surrogates"
    scripts_dir.mkdir(parents=True, exist_ok=True)
    rules = []
    for url, script in sorted(surrogates.items()):
        name = urllib.parse.quote(url, safe="")
        (scripts_dir / name).write_text(script.rewritten)
        rule = su.emit_rule(url, surrogate_path="surrogates/" + name)
        rules.append(
            {"pattern": rule.pattern, "surrogate_path": rule.surrogate_path, "script_url": url}
        )
    manifest = {
        "rules": rules,
        "reports": {
            url: {
                "neutralized": [
                    [s.script_url, s.function_name, s.line, s.column]
                    for s in script.report.neutralized
                ],
                "skipped": [
                    [[s.script_url, s.function_name, s.line, s.column], reason]
                    for s, reason in script.report.skipped
                ],
            }
            for url, script in sorted(surrogates.items())
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    total = report.total
    _write_summary(
        out,
        "surrogate",
        {
            "sites": total,
            "neutralized": len(report.neutralized),
            "skipped": len(report.skipped),
            "neutralization_rate": (len(report.neutralized) / total) if total else 0.0,
            "scripts": len(surrogates),
        },
    )
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    combined: dict[str, dict] = {}
    for summary in sorted(out.glob("*.summary.json")):
        obj = json.loads(summary.read_text())
        combined[obj.pop("stage")] = obj
    report = {"stages": combined}
    label = combined.get("label", {}).get("labels", {})
    total_fns = sum(label.values()) if label else combined.get("graph", {}).get("function_nodes")
    if total_fns:
        report["functions"] = total_fns
    if label:
        labeled = label.get("tracking", 0) + label.get("non_tracking", 0)
        report["tracking_functions"] = label.get("tracking", 0)
        report["tracking_fraction"] = (
            label.get("tracking", 0) / labeled if labeled else 0.0
        )
    if "surrogate" in combined:
        report["neutralization_rate"] = combined["surrogate"]["neutralization_rate"]
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="functrack",
        description="Function-level tracking detection and surrogate generation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, *, traces=True, scripts=False, filters=False, model=False, forest=False):
        p = sub.add_parser(name)
        if traces:
            p.add_argument("--traces", required=True, help="trace log file (JSONL)")
        if scripts:
            p.add_argument("--scripts", help="script source archive directory")
        if filters:
            p.add_argument("--filters", required=(name in ("label", "train")), help="filter list file")
        if model:
            p.add_argument("--model", required=(name == "classify"), help="trained model file")
        if forest:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--trees", type=int, default=1000)
            p.add_argument("--depth", type=int, default=20)
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=func)
        return p

    add("ingest", cmd_ingest, scripts=True)
    add("graph", cmd_graph)
    add("features", cmd_features)
    add("label", cmd_label, filters=True)
    add("train", cmd_train, filters=True, forest=True)
    add("classify", cmd_classify, model=True)
    add("surrogate", cmd_surrogate, scripts=True, filters=True, model=True)
    add("report", cmd_report, traces=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (tm.TraceError, fl.InvalidUrl, su.InvalidUrl, clf.SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
