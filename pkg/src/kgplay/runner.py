"""Multi-epoch self-play driver: sample -> propose -> solve -> reward ->
advantage -> export -> refine, with the curriculum advancing between epochs.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

from .config import RunConfig
from .kgstore import KnowledgeGraph
from .refine import append_audit_log, apply_batch, build_refinement_batch
from .rewards import anneal_weights
from .sampling import CurriculumState, advance_curriculum, schedule_value
from .selfplay import EpochStats, export_preferences, run_epoch

log = logging.getLogger(__name__)


def derive_epoch_seed(master_seed: int, epoch: int) -> int:
    return (master_seed * 1_000_003 + epoch) & 0x7FFFFFFF


def run_selfplay(graph: KnowledgeGraph, config: RunConfig, out_dir: str | Path) -> dict:
    """Run config.epochs epochs against `graph`, writing per-epoch stats,
    preference exports, and a refinement audit log under out_dir. Returns the
    run summary (also written as run_summary.json)."""
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.write_fingerprint(out_dir)

    model = config.make_model()
    classifier = config.make_classifier()
    embedder = config.make_embedder()
    spc = config.selfplay_config()
    refine_cfg = config.refine_config()
    hop_schedule = config.typed_hop_schedule()
    difficulty_schedule = config.typed_difficulty_schedule()

    cur = CurriculumState(
        epoch=0,
        max_hops=schedule_value(hop_schedule, 0),
        difficulty_level=schedule_value(difficulty_schedule, 0),
    )
    audit_path = out_dir / "refine_audit.jsonl"
    summary: dict = {
        "fingerprint": config.fingerprint(),
        "epochs": [],
        "max_hops_trace": [],
        "difficulty_trace": [],
        "weights_trace": [],
        "kept_total": 0,
        "exported_total": 0,
    }

    for epoch in range(config.epochs):
        epoch_dir = out_dir / f"epoch_{epoch:03d}"
        epoch_dir.mkdir(parents=True, exist_ok=True)
        epoch_seed = derive_epoch_seed(config.seed, epoch)
        episodes, stats = run_epoch(graph, cur, spc, model, epoch_seed=epoch_seed)
        exported = export_preferences(
            episodes, epoch_dir / "preferences.jsonl", epoch=epoch, config_fingerprint=config.fingerprint()
        )
        batch = build_refinement_batch(
            episodes,
            graph,
            refine_cfg,
            epoch=epoch,
            classifier=classifier,
            embedder=embedder if config.merge_each_epoch else None,
            include_merges=config.merge_each_epoch,
        )
        apply_batch(graph, batch, quarantine_new_edges=config.quarantine_new_edges)
        append_audit_log(batch, audit_path)
        _write_stats(stats, epoch_dir / "stats.json")

        weights = anneal_weights(spc.anneal, epoch)
        summary["epochs"].append(
            {
                "epoch": epoch,
                "attempted": stats.attempted,
                "completed": stats.completed,
                "kept": stats.kept_count,
                "exported": exported,
                "added_edges": len(batch.added),
                "penalized_edges": len(batch.penalized),
                "removed_edges": len(batch.removed),
                "merged_nodes": len(batch.merges),
            }
        )
        summary["max_hops_trace"].append(cur.max_hops)
        summary["difficulty_trace"].append(cur.difficulty_level)
        summary["weights_trace"].append([weights.answer, weights.path, weights.consistency])
        summary["kept_total"] += stats.kept_count
        summary["exported_total"] += exported
        log.info(
            "epoch %d: %d/%d kept, %d exported, +%d/-%d edges",
            epoch,
            stats.kept_count,
            stats.completed,
            exported,
            len(batch.added),
            len(batch.removed),
        )
        cur = advance_curriculum(cur, stats.per_type_accuracy, hop_schedule, difficulty_schedule)

    graph.save_snapshot(out_dir / "kg_final")
    (out_dir / "run_summary.json").write_text(
        json.dumps(summary, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary


def _write_stats(stats: EpochStats, path: Path) -> None:
    path.write_text(json.dumps(stats.to_json_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
