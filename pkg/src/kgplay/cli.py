"""Operator surface: build graphs, federate, run self-play, evaluate.

Exit codes: 0 ok, 1 usage, 2 data error (parse/schema/graph), 3 endpoint or
model-protocol failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .construct import build_document_graph, federate
from .corpus_ir import load_document
from .errors import (
    EndpointError,
    GraphError,
    KgplayError,
    ParseError,
    ProtocolError,
    SchemaError,
    StaleBatchError,
)
from .evaluation import evaluate_dataset, generate_dataset, load_dataset, save_dataset
from .kgstore import KnowledgeGraph
from .runner import run_selfplay
from .selfplay import load_preferences

log = logging.getLogger(__name__)

USAGE_EXIT = 1
DATA_EXIT = 2
ENDPOINT_EXIT = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for key in (
        "seed",
        "epochs",
        "questions_per_epoch",
        "group_size",
        "temperature",
        "scenario",
        "output_dir",
        "quarantine_new_edges",
    ):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "corpus", None):
        overrides["corpus"] = list(args.corpus)
    config.apply_overrides(overrides)
    config.validate()
    return config


def _doc_snapshot_dir(root: Path, doc_id: str) -> Path:
    return root / "kg" / doc_id


def cmd_build_kg(args) -> int:
    config = _load_config(args)
    if not config.corpus:
        raise SchemaError("build-kg needs at least one corpus document (config.corpus or --corpus)")
    out_root = Path(args.out or config.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    config.write_fingerprint(out_root)
    embedder = config.make_embedder()
    classifier = config.make_classifier()
    cc = config.construct_config()

    report = {"documents": [], "findings": []}
    errors = []
    for doc_path in config.corpus:
        try:
            doc = load_document(doc_path)
            graph, findings = build_document_graph(doc, embedder, classifier, cc)
            snap_dir = _doc_snapshot_dir(out_root, doc.doc_id)
            graph.save_snapshot(snap_dir)
            report["documents"].append(
                {
                    "doc_id": doc.doc_id,
                    "path": str(doc_path),
                    "nodes": len(graph.nodes),
                    "edges": graph.edge_count(),
                    "snapshot": str(snap_dir),
                }
            )
            report["findings"].extend(
                {"doc_id": doc.doc_id, "code": f.code, "path": f.path, "message": f.message} for f in findings
            )
        except KgplayError as exc:
            errors.append({"path": str(doc_path), "error": str(exc)})
            log.error("document %s failed: %s", doc_path, exc)
    report["errors"] = errors
    (out_root / "construction_report.json").write_text(
        json.dumps(report, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(str(out_root / "kg"))
    return DATA_EXIT if errors else 0


def _collect_snapshot_dirs(args) -> list[Path]:
    dirs = [Path(p) for p in (args.snapshot or [])]
    if args.snapshot_root:
        root = Path(args.snapshot_root)
        dirs.extend(sorted(p.parent for p in root.glob("*/manifest.json")))
    if not dirs:
        raise SchemaError("federate needs --snapshot dirs or --snapshot-root")
    return dirs


def cmd_federate(args) -> int:
    config = _load_config(args)
    dirs = _collect_snapshot_dirs(args)
    graphs = [KnowledgeGraph.load_snapshot(d) for d in dirs]
    embedder = config.make_embedder()
    union = federate(graphs, embedder, tau_cross=config.tau_cross)
    out_dir = Path(args.out or config.output_dir) / "federated"
    union.save_snapshot(out_dir)
    config.write_fingerprint(out_dir)
    print(str(out_dir))
    return 0


def cmd_selfplay_run(args) -> int:
    config = _load_config(args)
    graph = KnowledgeGraph.load_snapshot(args.snapshot)
    out_dir = Path(args.out or config.output_dir)
    run_selfplay(graph, config, out_dir)
    print(str(out_dir))
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    graph = KnowledgeGraph.load_snapshot(args.snapshot)
    items = load_dataset(args.dataset)
    model = config.make_model()
    report = evaluate_dataset(items, model, graph, epsilon=config.epsilon, tau=config.tau_num, seed=config.seed)
    out_dir = Path(args.out or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.write_fingerprint(out_dir)
    (out_dir / "metrics.json").write_text(
        json.dumps(report.to_json_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "metrics.txt").write_text(report.to_table() + "\n", encoding="utf-8")
    print(report.to_table())
    return 0


def cmd_export_prefs(args) -> int:
    run_dir = Path(args.run_dir)
    files = sorted(run_dir.glob("epoch_*/preferences.jsonl"))
    if not files:
        raise SchemaError(f"{run_dir}: no epoch_*/preferences.jsonl files found")
    records = []
    for f in files:
        records.extend(load_preferences(f))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r.to_json_dict(), ensure_ascii=False) for r in records]
    out.write_text(("\n".join(lines) + "\n") if lines else "", encoding="utf-8")
    print(f"{len(records)} records -> {out}")
    return 0


def cmd_gen_dataset(args) -> int:
    config = _load_config(args)
    graph = KnowledgeGraph.load_snapshot(args.snapshot)
    model = config.make_model()
    items = generate_dataset(
        graph,
        model,
        per_hop=args.per_hop,
        edge_weights=config.typed_edge_weights(),
        seed=config.seed,
    )
    save_dataset(items, args.out)
    print(f"{len(items)} items -> {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="kgplay", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config JSON; flags override")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--scenario", default=None, help="scripted model scenario file")
        p.add_argument("--out", default=None, help="output directory/file")

    p = sub.add_parser("build-kg", help="construct per-document graphs from IR JSON")
    common(p)
    p.add_argument("--corpus", nargs="*", default=None, help="IR JSON files")
    p.set_defaults(func=cmd_build_kg)

    p = sub.add_parser("federate", help="merge per-document snapshots into one graph")
    common(p)
    p.add_argument("--snapshot", action="append", default=None, help="snapshot dir (repeatable)")
    p.add_argument("--snapshot-root", default=None, help="dir containing per-doc snapshot dirs")
    p.set_defaults(func=cmd_federate)

    p = sub.add_parser("selfplay-run", help="run self-play epochs against a snapshot")
    common(p)
    p.add_argument("--snapshot", required=True, help="graph snapshot dir")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--questions-per-epoch", dest="questions_per_epoch", type=int, default=None)
    p.add_argument("--group-size", dest="group_size", type=int, default=None)
    p.add_argument(
        "--quarantine-new-edges",
        dest="quarantine_new_edges",
        action="store_const",
        const=True,
        default=None,
        help="keep refinement-added edges out of path sampling for one epoch",
    )
    p.set_defaults(func=cmd_selfplay_run)

    p = sub.add_parser("evaluate", help="run the metric suite over a QA dataset")
    common(p)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--dataset", required=True, help="QA items JSONL")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-prefs", help="combine per-epoch preference exports")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_prefs)

    p = sub.add_parser("gen-dataset", help="synthesize a QA dataset from graph paths")
    common(p)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--per-hop", type=int, default=10)
    p.set_defaults(func=cmd_gen_dataset)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParseError, SchemaError, GraphError, StaleBatchError) as exc:
        log.error("%s", exc)
        return DATA_EXIT
    except (EndpointError, ProtocolError) as exc:
        log.error("%s", exc)
        return ENDPOINT_EXIT


if __name__ == "__main__":
    sys.exit(main())
