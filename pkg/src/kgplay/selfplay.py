"""Proposer/Solver orchestration under information asymmetry.

The Proposer sees the sampled path, node contents, and the gold answer, and
must emit a question plus the node-id chain it claims to have used. The
Solver's prompt is built from the question text and image refs alone; that
asymmetry is enforced by construction and re-checked per episode by a string
audit against non-terminal node contents.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus_ir import Finding
from .errors import EndpointError, ProtocolError
from .kgstore import EdgeType, KnowledgeGraph, NodeType
from .model_client import (
    DEFAULT_MAX_TOKENS,
    ROLE_PROPOSER,
    ROLE_SOLVER,
    GenerationRequest,
)
from .rewards import (
    AnnealSchedule,
    RewardBreakdown,
    RewardWeights,
    anneal_weights,
    answer_score,
    consistency_score,
    path_score,
)
from .sampling import DEFAULT_EDGE_WEIGHTS, CurriculumState, ReasoningPath, sample_path
from .textutil import first_sentence, format_number, keywords, normalize_ws

QUESTION_TYPES = ("Factual", "Comparative", "Causal", "Synthesis")

# Above this total reward an episode enters the training export.
RETENTION_THRESHOLD = 0.5
# A mini-batch event fires after every this many kept episodes in an epoch.
MINIBATCH_INTERVAL = 15

# Recorded verbatim into preference exports for the downstream trainer.
DEFAULT_TRAINER_METADATA = {
    "dpo_beta": 0.1,
    "learning_rate": 2.0e-4,
    "batch_size": 2,
    "grad_accum_steps": 4,
    "max_update_steps_per_epoch": 100,
    "lora": {"rank": 16, "alpha": 32, "dropout": 0.05, "target_projections": ["q_proj", "v_proj"]},
}

DEFAULT_TEMPLATES = {
    "Contains": "Ask which element the opening node contains or belongs to.",
    "HasCaption": "Ask what the caption of the visual element states.",
    "References": "Ask what the referenced figure, table, or equation reports.",
    "Illustrates": "Ask what idea the visual element illustrates.",
    "Quantifies": "Ask for the quantity the terminal node provides.",
    "Defines": "Ask how the concept at the end of the chain is characterized.",
    "Supports": "Ask what evidence backs the claim at the end of the chain.",
    "Contradicts": "Ask what the terminal node states that conflicts with the start.",
    "DerivesFrom": "Ask what the claim at the end of the chain is derived from.",
    "Compares": "Ask how the two endpoints compare.",
    "SameConcept": "Ask what a second document reports about the shared concept.",
    "default": "Ask one question whose answer is the content of the terminal node.",
}

_QUESTION_LINE_RE = re.compile(r"^\s*question\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_PATH_LINE_RE = re.compile(r"^\s*path\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_ANSWER_RE = re.compile(r"answer\s*:\s*(.*)", re.IGNORECASE | re.DOTALL)

_QUESTION_TYPE_BY_EDGE = {
    EdgeType.Compares: "Comparative",
    EdgeType.Contradicts: "Causal",
    EdgeType.DerivesFrom: "Causal",
    EdgeType.SameConcept: "Synthesis",
}


@dataclass(frozen=True)
class ProposedQuestion:
    question: str
    gold_answer: str
    path: ReasoningPath
    declared_path: tuple[str, ...]
    question_type: str
    image_refs: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.gold_answer.strip():
            raise ProtocolError("proposed question lacks a gold answer")
        if not self.declared_path:
            raise ProtocolError("proposed question lacks a declared path")


@dataclass
class QAEpisode:
    proposed: ProposedQuestion
    candidates: tuple[str, ...]
    rewards: tuple[RewardBreakdown, ...]
    advantages: tuple[float, ...]
    kept: bool
    index: int = 0
    solver_prompt: str = ""
    audit_violations: tuple[str, ...] = ()

    def __post_init__(self):
        if not (len(self.candidates) == len(self.rewards) == len(self.advantages)):
            raise ProtocolError("episode group sizes disagree")
        if self.advantages and abs(sum(self.advantages)) > 1e-9:
            raise ProtocolError("episode advantages do not sum to zero")


@dataclass(frozen=True)
class RankedCandidate:
    rank: int
    candidate_index: int
    text: str
    answer_score: float
    path_score: float
    consistency_score: float
    total: float
    advantage: float


@dataclass(frozen=True)
class PreferenceRecord:
    question: str
    gold_answer: str
    path_nodes: tuple[str, ...]
    declared_path: tuple[str, ...]
    question_type: str
    image_refs: tuple[str, ...]
    epoch: int
    candidates: tuple[RankedCandidate, ...]
    weights: tuple[float, float, float]
    config_fingerprint: str
    trainer_metadata_json: str

    def to_json_dict(self) -> dict:
        return {
            "question": self.question,
            "gold_answer": self.gold_answer,
            "path_nodes": list(self.path_nodes),
            "declared_path": list(self.declared_path),
            "question_type": self.question_type,
            "image_refs": list(self.image_refs),
            "epoch": self.epoch,
            "candidates": [
                {
                    "rank": c.rank,
                    "candidate_index": c.candidate_index,
                    "text": c.text,
                    "answer_score": c.answer_score,
                    "path_score": c.path_score,
                    "consistency_score": c.consistency_score,
                    "total": c.total,
                    "advantage": c.advantage,
                }
                for c in self.candidates
            ],
            "weights": {"answer": self.weights[0], "path": self.weights[1], "consistency": self.weights[2]},
            "config_fingerprint": self.config_fingerprint,
            "trainer_metadata": json.loads(self.trainer_metadata_json),
        }

    @classmethod
    def from_json_dict(cls, rec: dict) -> "PreferenceRecord":
        return cls(
            question=rec["question"],
            gold_answer=rec["gold_answer"],
            path_nodes=tuple(rec["path_nodes"]),
            declared_path=tuple(rec["declared_path"]),
            question_type=rec["question_type"],
            image_refs=tuple(rec["image_refs"]),
            epoch=rec["epoch"],
            candidates=tuple(
                RankedCandidate(
                    rank=c["rank"],
                    candidate_index=c["candidate_index"],
                    text=c["text"],
                    answer_score=c["answer_score"],
                    path_score=c["path_score"],
                    consistency_score=c["consistency_score"],
                    total=c["total"],
                    advantage=c["advantage"],
                )
                for c in rec["candidates"]
            ),
            weights=(rec["weights"]["answer"], rec["weights"]["path"], rec["weights"]["consistency"]),
            config_fingerprint=rec["config_fingerprint"],
            trainer_metadata_json=json.dumps(rec["trainer_metadata"], sort_keys=True),
        )


@dataclass
class SelfPlayConfig:
    questions_per_epoch: int = 100
    group_size: int = 8
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = 0.7
    epsilon: float = 0.05
    tau_num: float = 0.05
    retention_threshold: float = RETENTION_THRESHOLD
    minibatch_interval: int = MINIBATCH_INTERVAL
    edge_weights: dict = field(default_factory=lambda: dict(DEFAULT_EDGE_WEIGHTS))
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    templates: dict = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    fail_abort_fraction: float = 0.5
    config_fingerprint: str = ""


@dataclass
class EpochStats:
    epoch: int
    max_hops: int
    difficulty_level: str
    weights: RewardWeights
    attempted: int = 0
    completed: int = 0
    kept_count: int = 0
    endpoint_failures: int = 0
    protocol_skips: int = 0
    findings: list[Finding] = field(default_factory=list)
    per_type_accuracy: dict = field(default_factory=dict)
    per_type_counts: dict = field(default_factory=dict)
    mean_total_reward: float = 0.0
    mean_answer_score: float = 0.0
    solver_answer_means: list[float] = field(default_factory=list)
    solver_answer_sums: list[float] = field(default_factory=list)
    proposer_rewards: list[float] = field(default_factory=list)
    proposer_advantages: list[float] = field(default_factory=list)
    minibatch_events: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "max_hops": self.max_hops,
            "difficulty_level": self.difficulty_level,
            "weights": {
                "answer": self.weights.answer,
                "path": self.weights.path,
                "consistency": self.weights.consistency,
            },
            "attempted": self.attempted,
            "completed": self.completed,
            "kept_count": self.kept_count,
            "endpoint_failures": self.endpoint_failures,
            "protocol_skips": self.protocol_skips,
            "findings": [{"code": f.code, "path": f.path, "message": f.message} for f in self.findings],
            "per_type_accuracy": {t.value: acc for t, acc in sorted(self.per_type_accuracy.items())},
            "per_type_counts": {t.value: n for t, n in sorted(self.per_type_counts.items())},
            "mean_total_reward": self.mean_total_reward,
            "mean_answer_score": self.mean_answer_score,
            "solver_answer_means": self.solver_answer_means,
            "solver_answer_sums": self.solver_answer_sums,
            "proposer_rewards": self.proposer_rewards,
            "proposer_advantages": self.proposer_advantages,
            "minibatch_events": self.minibatch_events,
        }


def derive_episode_seed(epoch_seed: int, question_index: int) -> int:
    return epoch_seed ^ question_index


def dominant_edge_type(path: ReasoningPath) -> EdgeType:
    """Most frequent type on the path; ties go to the higher base sampling
    weight, then to the type name."""
    counts: dict[EdgeType, int] = {}
    for t in path.edge_types():
        counts[t] = counts.get(t, 0) + 1
    return max(counts, key=lambda t: (counts[t], DEFAULT_EDGE_WEIGHTS.get(t, 0.0), t.value))


def question_type_for(path: ReasoningPath, graph: KnowledgeGraph) -> str:
    docs = {graph.nodes[n].doc_id for n in path.nodes if n in graph.nodes}
    if len(docs) > 1 or path.k >= 3:
        return "Synthesis"
    return _QUESTION_TYPE_BY_EDGE.get(dominant_edge_type(path), "Factual")


def extract_gold(node) -> tuple[str, str | None]:
    """Gold answer from a terminal node, plus the table cell context if any.

    Text-bearing nodes give their first sentence; tables give their first
    recorded cell value; figures their caption; equations their label or
    source line.
    """
    if node.type == NodeType.Table:
        for fact in node.facts:
            if fact.kind == "numeric" and fact.context not in ("", "text"):
                return format_number(float(fact.value)), fact.context
        return first_sentence(node.content), None
    if node.type == NodeType.Figure:
        gold = node.content.strip()
    elif node.type == NodeType.Equation:
        gold = node.label or (node.content.splitlines()[0].strip() if node.content.strip() else "")
    else:
        gold = first_sentence(node.content)
    if not gold.strip():
        gold = node.label or node.node_id
    return gold, None


def _template_for(templates: dict, edge_type: EdgeType, k: int, difficulty: str) -> str:
    for key in (f"{edge_type.value}|{k}|{difficulty}", edge_type.value, "default"):
        if key in templates:
            return templates[key]
    return DEFAULT_TEMPLATES["default"]


def build_proposer_prompt(
    path: ReasoningPath,
    graph: KnowledgeGraph,
    templates: dict,
    difficulty: str,
    question_type: str,
    gold: str,
    cell_context: str | None,
) -> str:
    hint = _template_for(templates, dominant_edge_type(path), path.k, difficulty)
    lines = [
        f"You are the Proposer. Write one {difficulty} question of type {question_type} "
        "that requires following the relation chain below.",
        hint,
        "PATH NODES:",
    ]
    for nid in path.nodes:
        node = graph.nodes[nid]
        lines.append(f"- [node:{nid}] ({node.type.value}) {normalize_ws(node.content)}")
    lines.append("EDGE TYPES: " + " -> ".join(t.value for t in path.edge_types()))
    lines.append(f"TERMINAL NODE: [node:{path.nodes[-1]}]")
    if cell_context:
        lines.append(f"TARGET CELL: {cell_context}")
    lines.append(f"GOLD ANSWER: {normalize_ws(gold)}")
    lines.append("Respond exactly in this format:")
    lines.append("QUESTION: <the question>")
    lines.append("PATH: <node ids joined by ' -> '>")
    return "\n".join(lines)


def parse_proposer_output(text: str) -> tuple[str, tuple[str, ...]]:
    path_match = _PATH_LINE_RE.search(text)
    if not path_match:
        raise ProtocolError("proposer output has no PATH line")
    tokens = [t.strip() for t in re.split(r"->|,", path_match.group(1)) if t.strip()]
    declared = []
    for token in tokens:
        token = token.strip()
        if token.startswith("[node:") and token.endswith("]"):
            token = token[len("[node:") : -1]
        declared.append(token)
    if not declared:
        raise ProtocolError("proposer PATH line is empty")
    question_match = _QUESTION_LINE_RE.search(text)
    if question_match:
        question = question_match.group(1).strip()
    else:
        first_line = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
        if not first_line:
            raise ProtocolError("proposer output has no question")
        question = first_line
    return question, tuple(declared)


def propose(
    path: ReasoningPath,
    graph: KnowledgeGraph,
    model,
    difficulty: str = "VQA",
    seed: int = 0,
    templates: dict | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = 0.7,
) -> ProposedQuestion:
    """One Proposer call: KG path in, question + declared node chain out.

    A malformed response gets a single repair retry with a stricter reminder;
    a second failure raises ProtocolError and the caller skips the episode.
    """
    templates = templates if templates is not None else DEFAULT_TEMPLATES
    terminal = graph.nodes[path.nodes[-1]]
    gold, cell_context = extract_gold(terminal)
    question_type = question_type_for(path, graph)
    image_refs = []
    for nid in path.nodes:
        ref = graph.nodes[nid].image_ref
        if ref and ref not in image_refs:
            image_refs.append(ref)
    prompt = build_proposer_prompt(path, graph, templates, difficulty, question_type, gold, cell_context)
    request = GenerationRequest(
        role=ROLE_PROPOSER,
        prompt=prompt,
        image_refs=tuple(image_refs),
        n=1,
        max_tokens=max_tokens,
        temperature=temperature,
        seed=seed,
    )
    try:
        question, declared = parse_proposer_output(model.generate(request)[0])
    except ProtocolError:
        retry = GenerationRequest(
            role=ROLE_PROPOSER,
            prompt=prompt + "\nREMINDER: respond with exactly one QUESTION: line and one PATH: line.",
            image_refs=tuple(image_refs),
            n=1,
            max_tokens=max_tokens,
            temperature=temperature,
            seed=seed + 1,
        )
        question, declared = parse_proposer_output(model.generate(retry)[0])
    return ProposedQuestion(
        question=question,
        gold_answer=gold,
        path=path,
        declared_path=declared,
        question_type=question_type,
        image_refs=tuple(image_refs),
    )


def build_solver_prompt(question: str) -> str:
    return "\n".join(
        [
            "Answer the question concisely.",
            f"QUESTION: {question}",
            "Respond in this format:",
            "ANSWER: <your answer>",
        ]
    )


def parse_solver_answer(text: str) -> str:
    match = _ANSWER_RE.search(text)
    return match.group(1).strip() if match else text.strip()


def solve(
    proposed: ProposedQuestion,
    model,
    group_size: int,
    seed: int = 0,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = 0.7,
) -> tuple[list[str], str]:
    """Generate the candidate group. The prompt is a function of the question
    and image refs only; nothing else from the episode may leak in."""
    prompt = build_solver_prompt(proposed.question)
    request = GenerationRequest(
        role=ROLE_SOLVER,
        prompt=prompt,
        image_refs=proposed.image_refs,
        n=group_size,
        max_tokens=max_tokens,
        temperature=temperature,
        seed=seed,
    )
    return [parse_solver_answer(c) for c in model.generate(request)], prompt


def audit_asymmetry(
    solver_prompt: str, path: ReasoningPath, graph: KnowledgeGraph, gold_answer: str = ""
) -> tuple[str, ...]:
    """Ids of non-terminal path nodes whose content leaked into the Solver
    prompt. Exempt: the terminal node (its content is the gold answer, and a
    legitimate question may quote it) and any content the gold itself reveals
    (a caption shares its text with its figure; a concept's surface form sits
    inside the sentence it was mined from)."""
    prompt_norm = normalize_ws(solver_prompt).lower()
    gold_norm = normalize_ws(gold_answer).lower()
    violations = []
    for nid in path.nodes[:-1]:
        node = graph.nodes.get(nid)
        if node is None:
            continue
        content_norm = normalize_ws(node.content).lower()
        if content_norm and content_norm not in gold_norm and content_norm in prompt_norm:
            violations.append(nid)
    return tuple(violations)


def compute_advantages(rewards: list[float]) -> list[float]:
    """Group-relative advantage: reward minus the group mean."""
    if not rewards:
        raise ProtocolError("cannot compute advantages of an empty group")
    mean = sum(rewards) / len(rewards)
    return [r - mean for r in rewards]


def score_episode(
    proposed: ProposedQuestion,
    candidates: list[str],
    graph: KnowledgeGraph,
    weights: RewardWeights,
    epsilon: float = 0.05,
    tau_num: float = 0.05,
) -> tuple[RewardBreakdown, ...]:
    gold_terms = keywords(proposed.gold_answer)
    declared_score = path_score(proposed.declared_path, graph)
    breakdowns = []
    for cand in candidates:
        a = answer_score(cand, proposed.gold_answer, epsilon=epsilon, gold_keywords=gold_terms)
        c = consistency_score(cand, proposed.path.nodes, graph, tau_num=tau_num)
        breakdowns.append(RewardBreakdown.compute(a, declared_score, c, weights))
    return tuple(breakdowns)


def run_epoch(
    graph: KnowledgeGraph,
    cur: CurriculumState,
    config: SelfPlayConfig,
    model,
    epoch_seed: int = 0,
) -> tuple[list[QAEpisode], EpochStats]:
    """One self-play epoch: sample, propose, solve, reward, advantage.

    Raises EndpointError when more than fail_abort_fraction of the attempted
    episodes failed on the wire; protocol violations only skip their episode.
    """
    weights = anneal_weights(config.anneal, cur.epoch)
    stats = EpochStats(
        epoch=cur.epoch, max_hops=cur.max_hops, difficulty_level=cur.difficulty_level, weights=weights
    )
    episodes: list[QAEpisode] = []
    per_type_sums: dict[EdgeType, float] = {}
    per_type_counts: dict[EdgeType, int] = {}

    for q_idx in range(config.questions_per_epoch):
        stats.attempted += 1
        episode_seed = derive_episode_seed(epoch_seed, q_idx)
        rng = random.Random(episode_seed)
        path = sample_path(graph, cur, config.edge_weights, rng)
        try:
            proposed = propose(
                path,
                graph,
                model,
                difficulty=cur.difficulty_level,
                seed=episode_seed,
                templates=config.templates,
                max_tokens=config.max_tokens,
                temperature=config.temperature,
            )
        except ProtocolError as exc:
            stats.protocol_skips += 1
            stats.findings.append(Finding("UnparseableProposal", f"episode[{q_idx}]", str(exc)))
            continue
        except EndpointError as exc:
            stats.endpoint_failures += 1
            stats.findings.append(Finding("EndpointFailure", f"episode[{q_idx}]", str(exc)))
            continue
        try:
            candidates, solver_prompt = solve(
                proposed,
                model,
                config.group_size,
                seed=episode_seed,
                max_tokens=config.max_tokens,
                temperature=config.temperature,
            )
        except EndpointError as exc:
            stats.endpoint_failures += 1
            stats.findings.append(Finding("EndpointFailure", f"episode[{q_idx}]", str(exc)))
            continue

        if len(proposed.declared_path) < 2:
            stats.findings.append(
                Finding("DegenerateDeclaration", f"episode[{q_idx}]", "declared path shorter than one hop")
            )
        violations = audit_asymmetry(solver_prompt, path, graph, proposed.gold_answer)
        if violations:
            stats.findings.append(
                Finding("AsymmetryViolation", f"episode[{q_idx}]", f"leaked contents of {violations}")
            )
        rewards = score_episode(
            proposed, candidates, graph, weights, epsilon=config.epsilon, tau_num=config.tau_num
        )
        advantages = compute_advantages([b.total for b in rewards])
        kept = max(b.total for b in rewards) > config.retention_threshold
        episode = QAEpisode(
            proposed=proposed,
            candidates=tuple(candidates),
            rewards=rewards,
            advantages=tuple(advantages),
            kept=kept,
            index=q_idx,
            solver_prompt=solver_prompt,
            audit_violations=violations,
        )
        episodes.append(episode)
        stats.completed += 1

        answer_mean = sum(b.answer_score for b in rewards) / len(rewards)
        answer_sum = sum(b.answer_score for b in rewards)
        stats.solver_answer_means.append(answer_mean)
        stats.solver_answer_sums.append(answer_sum)
        for t in set(path.edge_types()):
            per_type_sums[t] = per_type_sums.get(t, 0.0) + answer_mean
            per_type_counts[t] = per_type_counts.get(t, 0) + 1
        # Proposer reward: grounding quality plus a mid-difficulty bonus that
        # peaks when the Solver group lands at 50% answer accuracy.
        declared_component = rewards[0].path_score
        difficulty_component = 1.0 - abs(answer_mean - 0.5) * 2.0
        stats.proposer_rewards.append(
            weights.path * declared_component + weights.consistency * difficulty_component
        )
        if kept:
            stats.kept_count += 1
            if stats.kept_count % config.minibatch_interval == 0:
                stats.minibatch_events.append(
                    {"epoch": cur.epoch, "episode_index": q_idx, "kept_count": stats.kept_count}
                )

    if stats.attempted and stats.endpoint_failures > config.fail_abort_fraction * stats.attempted:
        raise EndpointError(
            f"epoch {cur.epoch} aborted: {stats.endpoint_failures}/{stats.attempted} episodes failed on the wire"
        )

    stats.per_type_accuracy = {t: per_type_sums[t] / per_type_counts[t] for t in per_type_sums}
    stats.per_type_counts = dict(per_type_counts)
    if episodes:
        totals = [b.total for e in episodes for b in e.rewards]
        answers = [b.answer_score for e in episodes for b in e.rewards]
        stats.mean_total_reward = sum(totals) / len(totals)
        stats.mean_answer_score = sum(answers) / len(answers)
        stats.proposer_advantages = compute_advantages(stats.proposer_rewards)
    return episodes, stats


def preference_records(
    episodes: list[QAEpisode],
    epoch: int = 0,
    config_fingerprint: str = "",
    trainer_metadata: dict | None = None,
) -> list[PreferenceRecord]:
    metadata = trainer_metadata if trainer_metadata is not None else DEFAULT_TRAINER_METADATA
    metadata_json = json.dumps(metadata, sort_keys=True)
    records = []
    for episode in episodes:
        if not episode.kept:
            continue
        order = sorted(range(len(episode.candidates)), key=lambda i: (-episode.rewards[i].total, i))
        ranked = tuple(
            RankedCandidate(
                rank=rank,
                candidate_index=i,
                text=episode.candidates[i],
                answer_score=episode.rewards[i].answer_score,
                path_score=episode.rewards[i].path_score,
                consistency_score=episode.rewards[i].consistency_score,
                total=episode.rewards[i].total,
                advantage=episode.advantages[i],
            )
            for rank, i in enumerate(order)
        )
        weights = episode.rewards[0].weights
        records.append(
            PreferenceRecord(
                question=episode.proposed.question,
                gold_answer=episode.proposed.gold_answer,
                path_nodes=episode.proposed.path.nodes,
                declared_path=episode.proposed.declared_path,
                question_type=episode.proposed.question_type,
                image_refs=episode.proposed.image_refs,
                epoch=epoch,
                candidates=ranked,
                weights=(weights.answer, weights.path, weights.consistency),
                config_fingerprint=config_fingerprint,
                trainer_metadata_json=metadata_json,
            )
        )
    return records


def export_preferences(
    episodes: list[QAEpisode],
    path: str | Path,
    epoch: int = 0,
    config_fingerprint: str = "",
    trainer_metadata: dict | None = None,
) -> int:
    """Write one JSON line per kept episode; returns the number written."""
    records = preference_records(episodes, epoch, config_fingerprint, trainer_metadata)
    lines = [json.dumps(r.to_json_dict(), ensure_ascii=False) for r in records]
    Path(path).write_text(("\n".join(lines) + "\n") if lines else "", encoding="utf-8")
    return len(records)


def load_preferences(path: str | Path) -> list[PreferenceRecord]:
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(PreferenceRecord.from_json_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ProtocolError(f"{path}:{lineno}: bad preference record: {exc}") from exc
    return records
