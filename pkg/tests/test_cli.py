from __future__ import annotations

import json
import filecmp
from pathlib import Path

import pytest

from kgplay.cli import main
from kgplay.kgstore import EdgeType, KnowledgeGraph

from conftest import FIXTURES


def write_config(tmp_path: Path, **extra) -> Path:
    payload = {
        "corpus": [str(FIXTURES / f"{n}.json") for n in ("paperA", "paperB", "paperC")],
        "scenario": str(FIXTURES / "scenario_smoke.json"),
        "seed": 7,
        **extra,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def build_and_federate(tmp_path: Path, config: Path) -> Path:
    build_dir = tmp_path / "build"
    assert main(["build-kg", "--config", str(config), "--out", str(build_dir)]) == 0
    fed_dir = tmp_path / "fed"
    assert (
        main(
            [
                "federate",
                "--config",
                str(config),
                "--snapshot-root",
                str(build_dir / "kg"),
                "--out",
                str(fed_dir),
            ]
        )
        == 0
    )
    return fed_dir / "federated"


def test_build_kg_writes_snapshots_and_report(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["build-kg", "--config", str(config), "--out", str(out)]) == 0
    for doc_id in ("paperA", "paperB", "paperC"):
        assert (out / "kg" / doc_id / "manifest.json").exists()
    report = json.loads((out / "construction_report.json").read_text())
    assert len(report["documents"]) == 3
    assert report["errors"] == []
    assert (out / "fingerprint.json").exists()


def test_build_kg_deterministic_across_runs(tmp_path):
    config = write_config(tmp_path)
    dirs = []
    for run in range(2):
        out = tmp_path / f"out{run}"
        assert main(["build-kg", "--config", str(config), "--out", str(out)]) == 0
        dirs.append(out)
    for doc_id in ("paperA", "paperB", "paperC"):
        for name in ("nodes.jsonl", "edges.jsonl", "manifest.json"):
            a = dirs[0] / "kg" / doc_id / name
            b = dirs[1] / "kg" / doc_id / name
            assert filecmp.cmp(a, b, shallow=False), f"{doc_id}/{name} differs between runs"


def test_build_kg_empty_corpus_is_data_error(tmp_path):
    config = write_config(tmp_path, corpus=[])
    assert main(["build-kg", "--config", str(config), "--out", str(tmp_path / "x")]) == 2


def test_build_kg_broken_document_reported(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    config = write_config(tmp_path, corpus=[str(broken)])
    out = tmp_path / "out"
    assert main(["build-kg", "--config", str(config), "--out", str(out)]) == 2
    report = json.loads((out / "construction_report.json").read_text())
    assert len(report["errors"]) == 1


def test_federate_produces_cross_document_links(tmp_path):
    config = write_config(tmp_path)
    fed_snapshot = build_and_federate(tmp_path, config)
    g = KnowledgeGraph.load_snapshot(fed_snapshot)
    same = [e for e in g.edges if e.type == EdgeType.SameConcept]
    assert len(same) >= 1


def test_federate_single_snapshot_unchanged(tmp_path):
    config = write_config(tmp_path)
    build_dir = tmp_path / "build"
    assert main(["build-kg", "--config", str(config), "--out", str(build_dir)]) == 0
    fed_dir = tmp_path / "fed"
    assert (
        main(
            [
                "federate",
                "--config",
                str(config),
                "--snapshot",
                str(build_dir / "kg" / "paperA"),
                "--out",
                str(fed_dir),
            ]
        )
        == 0
    )
    original = (build_dir / "kg" / "paperA" / "edges.jsonl").read_bytes()
    federated = (fed_dir / "federated" / "edges.jsonl").read_bytes()
    assert original == federated


def test_federate_without_snapshots_is_data_error(tmp_path):
    config = write_config(tmp_path)
    assert main(["federate", "--config", str(config), "--out", str(tmp_path / "f")]) == 2


def test_selfplay_run_end_to_end(tmp_path):
    config = write_config(
        tmp_path,
        epochs=2,
        questions_per_epoch=8,
        group_size=4,
        hop_schedule=[[0, 1], [1, 2]],
    )
    fed_snapshot = build_and_federate(tmp_path, config)
    run_dir = tmp_path / "run"
    assert (
        main(["selfplay-run", "--config", str(config), "--snapshot", str(fed_snapshot), "--out", str(run_dir)])
        == 0
    )
    summary = json.loads((run_dir / "run_summary.json").read_text())
    assert summary["max_hops_trace"] == [1, 2]
    assert (run_dir / "epoch_000" / "preferences.jsonl").exists()
    assert (run_dir / "epoch_001" / "stats.json").exists()
    assert (run_dir / "refine_audit.jsonl").exists()
    assert (run_dir / "kg_final" / "manifest.json").exists()


def test_selfplay_zero_epochs_is_valid_noop(tmp_path):
    config = write_config(tmp_path, epochs=0)
    fed_snapshot = build_and_federate(tmp_path, config)
    run_dir = tmp_path / "run0"
    assert (
        main(["selfplay-run", "--config", str(config), "--snapshot", str(fed_snapshot), "--out", str(run_dir)])
        == 0
    )
    summary = json.loads((run_dir / "run_summary.json").read_text())
    assert summary["epochs"] == []
    assert (run_dir / "kg_final" / "manifest.json").exists()


def test_export_prefs_merges_epochs(tmp_path):
    config = write_config(tmp_path, epochs=2, questions_per_epoch=6, group_size=4)
    fed_snapshot = build_and_federate(tmp_path, config)
    run_dir = tmp_path / "run"
    assert (
        main(["selfplay-run", "--config", str(config), "--snapshot", str(fed_snapshot), "--out", str(run_dir)])
        == 0
    )
    merged = tmp_path / "all_prefs.jsonl"
    assert main(["export-prefs", "--run-dir", str(run_dir), "--out", str(merged)]) == 0
    lines = [l for l in merged.read_text().splitlines() if l.strip()]
    per_epoch = sum(
        len((run_dir / f"epoch_{e:03d}" / "preferences.jsonl").read_text().splitlines()) for e in (0, 1)
    )
    assert len(lines) == per_epoch


def test_gen_dataset_and_evaluate(tmp_path):
    config = write_config(tmp_path, scenario=str(FIXTURES / "scenario_echo.json"))
    fed_snapshot = build_and_federate(tmp_path, config)
    dataset = tmp_path / "dataset.jsonl"
    assert (
        main(
            [
                "gen-dataset",
                "--config",
                str(config),
                "--snapshot",
                str(fed_snapshot),
                "--per-hop",
                "3",
                "--out",
                str(dataset),
            ]
        )
        == 0
    )
    assert len(dataset.read_text().splitlines()) == 9
    eval_dir = tmp_path / "eval"
    assert (
        main(
            [
                "evaluate",
                "--config",
                str(config),
                "--snapshot",
                str(fed_snapshot),
                "--dataset",
                str(dataset),
                "--out",
                str(eval_dir),
            ]
        )
        == 0
    )
    metrics = json.loads((eval_dir / "metrics.json").read_text())
    assert set(metrics["per_hop_accuracy"].values()) == {1.0}
    assert (eval_dir / "metrics.txt").read_text().startswith("metric")


def test_evaluate_malformed_dataset_is_data_error(tmp_path):
    config = write_config(tmp_path)
    fed_snapshot = build_and_federate(tmp_path, config)
    dataset = tmp_path / "bad.jsonl"
    dataset.write_text('{"id": "x", "question": "", "gold_answer": "a"}\n', encoding="utf-8")
    assert (
        main(
            [
                "evaluate",
                "--config",
                str(config),
                "--snapshot",
                str(fed_snapshot),
                "--dataset",
                str(dataset),
                "--out",
                str(tmp_path / "e"),
            ]
        )
        == 2
    )


def test_usage_errors_exit_one(tmp_path):
    assert main([]) == 1
    assert main(["no-such-command"]) == 1
    assert main(["selfplay-run"]) == 1  # missing --snapshot


def test_unknown_config_key_is_data_error(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"no_such_knob": 1}), encoding="utf-8")
    assert main(["build-kg", "--config", str(config), "--out", str(tmp_path / "o")]) == 2


def test_fingerprint_stable_across_runs(tmp_path):
    config = write_config(tmp_path)
    prints = []
    for run in range(2):
        out = tmp_path / f"fp{run}"
        assert main(["build-kg", "--config", str(config), "--out", str(out)]) == 0
        prints.append(json.loads((out / "fingerprint.json").read_text())["fingerprint"])
    assert prints[0] == prints[1]


def test_console_entry_point_runs():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "kgplay.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "build-kg" in proc.stdout
