"""Trainer stub: validates preference exports and re-derives the advantage
math instead of re-running a training job. Weight updates are delegated to an
external trainer; what is desk-verifiable is record integrity, ranking
consistency, and that every exported advantage equals reward minus group mean.
"""
from __future__ import annotations

import json
from pathlib import Path

from .config import BridgeConfig

ADVANTAGE_TOLERANCE = 1e-9


def train_from_preferences(path: str | Path, config: BridgeConfig | None = None, dry_run: bool = True) -> dict:
    """Validate a preference JSONL export; returns the training log.

    In dry-run mode (the only implemented mode) no parameters are touched:
    the log records how many records were checked, every advantage or
    ranking mismatch found, and the trainer settings carried through verbatim.
    """
    config = config or BridgeConfig()
    path = Path(path)
    log: dict = {
        "preferences_file": str(path),
        "dry_run": True,
        "applied": False,
        "records_checked": 0,
        "candidates_checked": 0,
        "mismatches": [],
        "errors": [],
        "trainer_config": dict(config.trainer),
        "model": config.model,
    }
    if not dry_run:
        log["errors"].append("only dry-run validation is implemented; refusing to pretend to train")
        log["valid"] = False
        return log

    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        log["errors"].append(f"cannot read file: {exc}")
        log["valid"] = False
        return log

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            log["errors"].append(f"line {lineno}: invalid JSON: {exc}")
            continue
        problem = _check_record(record, lineno, log)
        if problem:
            log["errors"].append(problem)
            continue
        log["records_checked"] += 1

    log["valid"] = not log["errors"] and not log["mismatches"]
    return log


def _check_record(record: dict, lineno: int, log: dict) -> str | None:
    for field in ("question", "gold_answer", "candidates", "weights", "epoch"):
        if field not in record:
            return f"line {lineno}: missing field '{field}'"
    candidates = record["candidates"]
    if not isinstance(candidates, list) or not candidates:
        return f"line {lineno}: candidates must be a non-empty list"
    try:
        totals = [float(c["total"]) for c in candidates]
        advantages = [float(c["advantage"]) for c in candidates]
        ranks = [int(c["rank"]) for c in candidates]
        indexes = [int(c["candidate_index"]) for c in candidates]
    except (KeyError, TypeError, ValueError) as exc:
        return f"line {lineno}: bad candidate entry: {exc}"

    mean_total = sum(totals) / len(totals)
    for position, candidate in enumerate(candidates):
        log["candidates_checked"] += 1
        expected = totals[position] - mean_total
        if abs(advantages[position] - expected) > ADVANTAGE_TOLERANCE:
            log["mismatches"].append(
                {
                    "line": lineno,
                    "candidate_index": indexes[position],
                    "exported_advantage": advantages[position],
                    "recomputed_advantage": expected,
                }
            )
    # ranking must follow total reward, ties by original candidate index
    expected_order = sorted(range(len(candidates)), key=lambda i: (-totals[i], indexes[i]))
    if ranks != sorted(ranks) or expected_order != list(range(len(candidates))):
        log["mismatches"].append({"line": lineno, "ranking": "not consistent with total reward"})
    return None


def write_log(log: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(log, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")
