"""The three graph-verified reward components and their weighted combination.

answer_score:      hierarchical answer match — max of exact containment,
                   numeric equivalence within a relative tolerance, and
                   keyword-overlap fraction.
path_score:        fraction of consecutive declared node pairs backed by a
                   valid graph edge.
consistency_score: fraction of the answer's extracted numbers and terms that
                   agree with facts stored on the path's nodes.

All components live in [0, 1]; the total is their exact weighted sum. The
weights are linearly annealed across epochs from answer-heavy toward
path/consistency-heavy.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import GraphError
from .textutil import extract_numbers, keywords, normalize_ws, tokenize

WEIGHT_SUM_TOL = 1e-9

DEFAULT_EPSILON = 0.05  # relative numeric tolerance for answer matching
DEFAULT_TAU_NUM = 0.05  # relative numeric tolerance for fact consistency


@dataclass(frozen=True)
class RewardWeights:
    answer: float
    path: float
    consistency: float

    def __post_init__(self):
        for name, w in (("answer", self.answer), ("path", self.path), ("consistency", self.consistency)):
            if w < 0:
                raise GraphError(f"reward weight {name} must be >= 0, got {w}")
        total = self.answer + self.path + self.consistency
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise GraphError(f"reward weights must sum to 1, got {total}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.answer, self.path, self.consistency)


DEFAULT_INITIAL_WEIGHTS = RewardWeights(0.5, 0.3, 0.2)
DEFAULT_FINAL_WEIGHTS = RewardWeights(0.3, 0.4, 0.3)


@dataclass(frozen=True)
class RewardBreakdown:
    answer_score: float
    path_score: float
    consistency_score: float
    total: float
    weights: RewardWeights

    def __post_init__(self):
        expected = (
            self.weights.answer * self.answer_score
            + self.weights.path * self.path_score
            + self.weights.consistency * self.consistency_score
        )
        if abs(self.total - expected) > 1e-12:
            raise GraphError(f"breakdown total {self.total} != weighted sum {expected}")

    @classmethod
    def compute(
        cls, answer_score: float, path_score: float, consistency_score: float, weights: RewardWeights
    ) -> "RewardBreakdown":
        total = total_reward(answer_score, path_score, consistency_score, weights)
        return cls(answer_score, path_score, consistency_score, total, weights)


@dataclass(frozen=True)
class AnnealSchedule:
    initial: RewardWeights = DEFAULT_INITIAL_WEIGHTS
    final: RewardWeights = DEFAULT_FINAL_WEIGHTS
    total_epochs: int = 30


def anneal_weights(schedule: AnnealSchedule, epoch: int) -> RewardWeights:
    """Component-wise linear interpolation over [0, total_epochs - 1], clamped
    beyond the endpoints, renormalized to sum exactly 1."""
    if epoch < 0:
        raise GraphError(f"epoch must be >= 0, got {epoch}")
    span = max(schedule.total_epochs - 1, 1)
    t = min(max(epoch / span, 0.0), 1.0)
    raw = [a + (b - a) * t for a, b in zip(schedule.initial.as_tuple(), schedule.final.as_tuple())]
    total = sum(raw)
    return RewardWeights(*(w / total for w in raw))


def _normalize_answer(text: str) -> str:
    return normalize_ws(text).lower()


def answer_score(
    candidate: str,
    gold: str,
    epsilon: float = DEFAULT_EPSILON,
    gold_keywords: set[str] | None = None,
) -> float:
    """Hierarchical match of a candidate answer against the gold answer.

    Criteria, evaluated as a max (the max subsumes the hierarchy):
      1. containment — normalized gold appears inside the candidate -> 1.0
      2. numeric     — first numbers of both strings agree within `epsilon`
                       relative error -> 1.0 (only when both have a number)
      3. keywords    — |K(candidate) ∩ K(gold)| / |K(gold)|

    Case and surrounding whitespace never matter.
    """
    if not gold.strip():
        raise GraphError("gold answer must be non-empty")
    cand_norm = _normalize_answer(candidate)
    gold_norm = _normalize_answer(gold)

    containment = 1.0 if gold_norm and gold_norm in cand_norm else 0.0

    numeric = 0.0
    cand_nums = extract_numbers(candidate)
    gold_nums = extract_numbers(gold)
    if cand_nums and gold_nums:
        got, want = cand_nums[0], gold_nums[0]
        if want == 0.0:
            numeric = 1.0 if got == 0.0 else 0.0
        elif abs(got - want) / abs(want) <= epsilon:
            numeric = 1.0

    gold_terms = gold_keywords if gold_keywords is not None else keywords(gold)
    overlap = 0.0
    if gold_terms:
        cand_terms = keywords(candidate)
        overlap = len(cand_terms & set(gold_terms)) / len(gold_terms)

    return max(containment, numeric, overlap)


def path_score(declared: list[str] | tuple[str, ...], graph) -> float:
    """Fraction of consecutive declared pairs connected by a valid edge.

    Fewer than two declared nodes is a degenerate declaration and scores 0.0;
    callers log it as a finding. Unknown node ids simply fail their pairs.
    """
    if len(declared) < 2:
        return 0.0
    hops = len(declared) - 1
    hits = sum(1 for i in range(hops) if graph.has_valid_edge(declared[i], declared[i + 1]))
    return hits / hops


def _path_facts(path_node_ids, graph) -> list:
    facts = []
    for node_id in path_node_ids:
        node = graph.nodes.get(node_id)
        if node is not None:
            facts.extend(node.facts)
    return facts


def consistency_score(candidate: str, path_node_ids, graph, tau_num: float = DEFAULT_TAU_NUM) -> float:
    """Agreement of the answer's numbers and terms with facts on path nodes.

    A number is consistent when some numeric fact matches it within `tau_num`
    relative error (a zero-valued fact only matches a literal zero). A term is
    consistent when it occurs among the word tokens of the path's term facts.
    An answer with nothing extractable is vacuously consistent (1.0): short
    categorical answers should not be punished for carrying no facts.
    """
    facts = _path_facts(path_node_ids, graph)
    fact_numbers = [float(f.value) for f in facts if f.kind == "numeric"]
    fact_term_tokens: set[str] = set()
    for f in facts:
        if f.kind == "term":
            fact_term_tokens.update(tokenize(str(f.value)))

    numbers = extract_numbers(candidate)
    terms = sorted(keywords(candidate))
    if not numbers and not terms:
        return 1.0

    consistent = 0
    for number in numbers:
        for fact_value in fact_numbers:
            if fact_value == 0.0:
                if number == 0.0:
                    consistent += 1
                    break
            elif abs(number - fact_value) / abs(fact_value) <= tau_num:
                consistent += 1
                break
    for term in terms:
        if term in fact_term_tokens:
            consistent += 1
    return consistent / (len(numbers) + len(terms))


def total_reward(answer: float, path: float, consistency: float, weights: RewardWeights) -> float:
    for name, score in (("answer", answer), ("path", path), ("consistency", consistency)):
        if not (0.0 <= score <= 1.0):
            raise GraphError(f"{name} score {score} outside [0, 1]")
    return weights.answer * answer + weights.path * path + weights.consistency * consistency
