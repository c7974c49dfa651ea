"""Dataset-level evaluation: hierarchical accuracy, path overlap F1, and
hallucination rate, plus a synthetic dataset generator driven by the graph.

Accuracy deliberately shares its implementation with the answer-reward
component: one function, two call sites, so training and evaluation can never
drift apart.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GraphError, NoPathAvailable, ProtocolError, SchemaError
from .kgstore import Fact, KnowledgeGraph
from .model_client import ROLE_SOLVER, GenerationRequest
from .rewards import answer_score
from .sampling import CurriculumState, sample_path
from .selfplay import QUESTION_TYPES, build_solver_prompt, parse_solver_answer, propose
from .textutil import extract_numbers, keywords, tokenize

# Shared implementation with the reward engine (single source of truth).
accuracy = answer_score

_NODE_SENTINEL_RE = re.compile(r"\[node:([^\]\s]+)\]")


@dataclass
class QAItem:
    id: str
    question: str
    gold_answer: str
    gold_path: list[str] | None = None
    hop_level: int = 1
    question_type: str = "Factual"
    image_refs: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if not self.id:
            raise SchemaError("item id must be non-empty")
        if not self.question.strip():
            raise SchemaError(f"item '{self.id}': empty question")
        if not self.gold_answer.strip():
            raise SchemaError(f"item '{self.id}': empty gold_answer")
        if self.question_type not in QUESTION_TYPES:
            raise SchemaError(f"item '{self.id}': unknown question_type {self.question_type!r}")
        if self.hop_level not in (1, 2, 3):
            raise SchemaError(f"item '{self.id}': hop_level must be 1, 2, or 3")
        if self.gold_path is not None and len(self.gold_path) - 1 != self.hop_level:
            raise SchemaError(
                f"item '{self.id}': hop_level {self.hop_level} != |gold_path| - 1 = {len(self.gold_path) - 1}"
            )

    def to_json_dict(self) -> dict:
        out = {
            "id": self.id,
            "question": self.question,
            "gold_answer": self.gold_answer,
            "hop_level": self.hop_level,
            "question_type": self.question_type,
            "image_refs": list(self.image_refs),
        }
        if self.gold_path is not None:
            out["gold_path"] = list(self.gold_path)
        return out

    @classmethod
    def from_json_dict(cls, rec: dict) -> "QAItem":
        item = cls(
            id=rec.get("id", ""),
            question=rec.get("question", ""),
            gold_answer=rec.get("gold_answer", ""),
            gold_path=list(rec["gold_path"]) if rec.get("gold_path") is not None else None,
            hop_level=rec.get("hop_level", 1),
            question_type=rec.get("question_type", "Factual"),
            image_refs=list(rec.get("image_refs", [])),
        )
        item.validate()
        return item


@dataclass
class MetricsReport:
    per_hop_accuracy: dict[int, float]
    accuracy_mean: float
    path_f1_mean: float
    halnum_mean: float
    halfact_mean: float
    hallucination_rate_mean: float
    counts: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "per_hop_accuracy": {str(h): v for h, v in sorted(self.per_hop_accuracy.items())},
            "accuracy_mean": self.accuracy_mean,
            "path_f1_mean": self.path_f1_mean,
            "halnum_mean": self.halnum_mean,
            "halfact_mean": self.halfact_mean,
            "hallucination_rate_mean": self.hallucination_rate_mean,
            "counts": dict(self.counts),
        }

    def to_table(self) -> str:
        """Aligned plain-text summary, one row per hop plus the aggregates."""
        header = f"{'metric':<22}{'value':>10}"
        rows = [header, "-" * len(header)]
        for hop in sorted(self.per_hop_accuracy):
            rows.append(f"{f'accuracy {hop}-hop':<22}{self.per_hop_accuracy[hop]:>10.4f}")
        rows.append(f"{'accuracy mean':<22}{self.accuracy_mean:>10.4f}")
        rows.append(f"{'path F1 mean':<22}{self.path_f1_mean:>10.4f}")
        rows.append(f"{'halluc. rate mean':<22}{self.hallucination_rate_mean:>10.4f}")
        return "\n".join(rows)


def path_f1(model_pairs: set, kg_pairs: set) -> float:
    """2 * |intersection| / (|model| + |gold|) over unordered node pairs."""
    if not kg_pairs:
        raise GraphError("path_f1 requires a non-empty gold pair set")
    norm_model = {tuple(sorted(p)) for p in model_pairs}
    norm_kg = {tuple(sorted(p)) for p in kg_pairs}
    if not norm_model:
        return 0.0
    overlap = len(norm_model & norm_kg)
    return 2.0 * overlap / (len(norm_model) + len(norm_kg))


def consecutive_pairs(node_ids) -> set:
    return {tuple(sorted((u, v))) for u, v in zip(node_ids, node_ids[1:])}


def extract_model_pairs(answer_text: str, graph: KnowledgeGraph) -> set:
    """Node pairs an answer refers to, as consecutive mentions.

    Sentinel markup ([node:id]) wins when present; otherwise nodes are matched
    by alias (their label, or their surface form for concepts), ordered by
    first mention.
    """
    mentions = _NODE_SENTINEL_RE.findall(answer_text)
    if not mentions:
        lowered = answer_text.lower()
        hits = []
        for nid in sorted(graph.nodes):
            node = graph.nodes[nid]
            aliases = []
            if node.label:
                aliases.append(node.label.lower())
            if node.type.value == "Concept":
                aliases.append(node.content.lower())
            position = None
            for alias in aliases:
                if not alias:
                    continue
                found = lowered.find(alias)
                if found >= 0 and (position is None or found < position):
                    position = found
            if position is not None:
                hits.append((position, nid))
        hits.sort()
        mentions = [nid for _, nid in hits]
    deduped = []
    for nid in mentions:
        if not deduped or deduped[-1] != nid:
            deduped.append(nid)
    return consecutive_pairs(deduped)


def hallucination_rate(candidate: str, facts: list[Fact], tau: float = 0.05) -> tuple[float, float, float]:
    """(HalNum, HalFact, combined rate) for one answer against gold facts.

    Each extracted number pairs with the nearest gold numeric fact by relative
    error; above tau (or with no numeric fact to match, or against a zero
    fact while nonzero) it counts as hallucinated. Terms count as hallucinated
    when absent from the gold term vocabulary. The combined rate is the plain
    mean of the two fractions, and no extractions at all means (0, 0, 0).
    """
    gold_numbers = [float(f.value) for f in facts if f.kind == "numeric"]
    gold_terms: set[str] = set()
    for f in facts:
        if f.kind == "term":
            gold_terms.update(tokenize(str(f.value)))

    numbers = extract_numbers(candidate)
    terms = sorted(keywords(candidate))
    if not numbers and not terms:
        return (0.0, 0.0, 0.0)

    halnum = 0.0
    if numbers:
        bad = 0
        for value in numbers:
            best = None
            for gold in gold_numbers:
                if gold == 0.0:
                    err = 0.0 if value == 0.0 else float("inf")
                else:
                    err = abs(value - gold) / abs(gold)
                if best is None or err < best:
                    best = err
            if best is None or best > tau:
                bad += 1
        halnum = bad / len(numbers)
    halfact = 0.0
    if terms:
        halfact = sum(1 for t in terms if t not in gold_terms) / len(terms)
    return (halnum, halfact, 0.5 * (halnum + halfact))


def _facts_along(graph: KnowledgeGraph, node_ids) -> list[Fact]:
    facts: list[Fact] = []
    for nid in node_ids:
        node = graph.nodes.get(nid)
        if node is not None:
            facts.extend(node.facts)
    return facts


def evaluate_dataset(
    items: list[QAItem],
    model,
    graph: KnowledgeGraph,
    epsilon: float = 0.05,
    tau: float = 0.05,
    max_tokens: int = 256,
    seed: int = 0,
) -> MetricsReport:
    """Answer every item solver-style (question + images only) and aggregate.

    Path F1 and hallucination cover only items that carry a gold path; answers
    with no extractable facts count as hallucination-free.
    """
    for item in items:
        item.validate()
    per_hop_scores: dict[int, list[float]] = {}
    all_scores: list[float] = []
    f1_scores: list[float] = []
    halnums: list[float] = []
    halfacts: list[float] = []
    rates: list[float] = []
    for i, item in enumerate(items):
        request = GenerationRequest(
            role=ROLE_SOLVER,
            prompt=build_solver_prompt(item.question),
            image_refs=tuple(item.image_refs),
            n=1,
            max_tokens=max_tokens,
            temperature=0.0,
            seed=seed ^ i,
        )
        answer = parse_solver_answer(model.generate(request)[0])
        score = accuracy(answer, item.gold_answer, epsilon=epsilon)
        all_scores.append(score)
        per_hop_scores.setdefault(item.hop_level, []).append(score)
        if item.gold_path:
            gold_pairs = consecutive_pairs(item.gold_path)
            f1_scores.append(path_f1(extract_model_pairs(answer, graph), gold_pairs))
            halnum, halfact, rate = hallucination_rate(answer, _facts_along(graph, item.gold_path), tau=tau)
            halnums.append(halnum)
            halfacts.append(halfact)
            rates.append(rate)

    def mean(values: list[float]) -> float:
        return sum(values) / len(values) if values else 0.0

    counts = {"total": len(items)}
    for hop, scores in sorted(per_hop_scores.items()):
        counts[f"hop_{hop}"] = len(scores)
    counts["with_gold_path"] = len(f1_scores)
    return MetricsReport(
        per_hop_accuracy={hop: mean(scores) for hop, scores in per_hop_scores.items()},
        accuracy_mean=mean(all_scores),
        path_f1_mean=mean(f1_scores),
        halnum_mean=mean(halnums),
        halfact_mean=mean(halfacts),
        hallucination_rate_mean=mean(rates),
        counts=counts,
    )


def load_dataset(path: str | Path) -> list[QAItem]:
    """Read QA items from JSON lines; schema failures name the offending item."""
    items = []
    errors = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(f"line {lineno}: invalid JSON: {exc}")
            continue
        try:
            items.append(QAItem.from_json_dict(rec))
        except SchemaError as exc:
            errors.append(f"line {lineno}: {exc}")
    if errors:
        raise SchemaError(f"{path}: {len(errors)} bad items: " + "; ".join(errors))
    return items


def save_dataset(items: list[QAItem], path: str | Path) -> None:
    lines = [json.dumps(item.to_json_dict(), ensure_ascii=False) for item in items]
    Path(path).write_text(("\n".join(lines) + "\n") if lines else "", encoding="utf-8")


def generate_dataset(
    graph: KnowledgeGraph,
    model,
    per_hop: int = 10,
    hops: tuple[int, ...] = (1, 2, 3),
    edge_weights: dict | None = None,
    seed: int = 0,
    max_attempts_factor: int = 20,
) -> list[QAItem]:
    """Synthesize QA items by sampling paths of each exact hop length and
    asking the Proposer for a question per path."""
    from .sampling import DEFAULT_EDGE_WEIGHTS

    weights = edge_weights if edge_weights is not None else dict(DEFAULT_EDGE_WEIGHTS)
    rng = random.Random(seed)
    items: list[QAItem] = []
    for hop in hops:
        cur = CurriculumState(epoch=0, max_hops=hop)
        made = 0
        attempts = 0
        while made < per_hop and attempts < per_hop * max_attempts_factor:
            attempts += 1
            try:
                path = sample_path(graph, cur, weights, rng)
            except NoPathAvailable:
                break
            if path.k != hop:
                continue
            try:
                proposed = propose(path, graph, model, difficulty="Factual", seed=seed ^ attempts)
            except ProtocolError:
                continue
            items.append(
                QAItem(
                    id=f"gen-{hop}hop-{made:04d}",
                    question=proposed.question,
                    gold_answer=proposed.gold_answer,
                    gold_path=list(path.nodes),
                    hop_level=hop,
                    question_type=proposed.question_type,
                    image_refs=list(proposed.image_refs),
                )
            )
            made += 1
    return items
