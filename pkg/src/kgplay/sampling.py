"""Curriculum-weighted random walks over the knowledge graph.

Walks are simple paths (no node repeats), may traverse edges against their
stored direction, and stop early at dead ends rather than resampling. Edge
choice is weighted by type, with each type's base weight boosted inversely to
the previous epoch's per-type accuracy so the walk revisits what the model
keeps getting wrong.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import GraphError, NoPathAvailable
from .kgstore import EdgeType, KGEdge, KnowledgeGraph

# Per-type sampling weights, highest for cross-document and adversarial
# relations, lowest for bare containment.
DEFAULT_EDGE_WEIGHTS: dict[EdgeType, float] = {
    EdgeType.SameConcept: 1.00,
    EdgeType.Contradicts: 0.95,
    EdgeType.Supports: 0.90,
    EdgeType.Illustrates: 0.90,
    EdgeType.Compares: 0.90,
    EdgeType.Defines: 0.85,
    EdgeType.DerivesFrom: 0.85,
    EdgeType.Quantifies: 0.80,
    EdgeType.References: 0.80,
    EdgeType.HasCaption: 0.50,
    EdgeType.Contains: 0.30,
}

# Accuracy floor in the inverse boost: caps the weight multiplier at 10x.
ACCURACY_FLOOR = 0.1

DIFFICULTY_LEVELS = ("VQA", "Factual", "Causal", "InstructionFollowing")

# Hop count steps up by thirds of a 30-epoch run; difficulty by quarters.
DEFAULT_HOP_SCHEDULE: tuple[tuple[int, int], ...] = ((0, 1), (10, 2), (20, 3))
DEFAULT_DIFFICULTY_SCHEDULE: tuple[tuple[int, str], ...] = (
    (0, "VQA"),
    (8, "Factual"),
    (16, "Causal"),
    (24, "InstructionFollowing"),
)

EdgeTypeWeights = dict


def validate_weights(weights: dict[EdgeType, float]) -> None:
    if not weights:
        raise GraphError("edge-type weights must not be empty")
    if any(w < 0 for w in weights.values()):
        raise GraphError("edge-type weights must be >= 0")
    if not any(w > 0 for w in weights.values()):
        raise GraphError("at least one edge-type weight must be positive")


def schedule_value(schedule, epoch: int):
    """Value of a stepwise (start_epoch, value) schedule at `epoch`."""
    current = None
    for start, value in sorted(schedule, key=lambda item: item[0]):
        if epoch >= start:
            current = value
    if current is None:
        raise GraphError(f"schedule {schedule!r} has no entry covering epoch {epoch}")
    return current


@dataclass
class CurriculumState:
    epoch: int = 0
    max_hops: int = 1
    per_type_accuracy: dict[EdgeType, float] = field(default_factory=dict)
    difficulty_level: str = "VQA"

    def __post_init__(self):
        if self.max_hops < 1:
            raise GraphError("max_hops must be >= 1")
        if self.difficulty_level not in DIFFICULTY_LEVELS:
            raise GraphError(f"unknown difficulty level {self.difficulty_level!r}")
        for t, acc in self.per_type_accuracy.items():
            if not (0.0 <= acc <= 1.0):
                raise GraphError(f"accuracy for {t} outside [0, 1]: {acc}")


@dataclass(frozen=True)
class ReasoningPath:
    """Alternating node/edge sequence; nodes[i], nodes[i+1] are the endpoints
    of edges[i] in traversal order (which may oppose the stored direction)."""

    nodes: tuple[str, ...]
    edges: tuple[KGEdge, ...]

    def __post_init__(self):
        if len(self.nodes) != len(self.edges) + 1 or not self.edges:
            raise GraphError("path needs k>=1 edges and k+1 nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("path repeats a node")
        for i, edge in enumerate(self.edges):
            step = {self.nodes[i], self.nodes[i + 1]}
            if step != {edge.src, edge.dst}:
                raise GraphError(f"edge {edge.key} does not connect step {i} of the path")

    @property
    def k(self) -> int:
        return len(self.edges)

    def edge_types(self) -> tuple[EdgeType, ...]:
        return tuple(e.type for e in self.edges)


def effective_weights(base: dict[EdgeType, float], cur: CurriculumState) -> dict[EdgeType, float]:
    """base / max(accuracy, floor); a type never seen counts as accuracy 1.0."""
    validate_weights(base)
    return {t: w / max(cur.per_type_accuracy.get(t, 1.0), ACCURACY_FLOOR) for t, w in base.items()}


def _step_candidates(graph: KnowledgeGraph, at: str, visited: set[str], weights: dict[EdgeType, float]):
    out = []
    for edge, other in graph.neighbors(at):
        if other.node_id in visited:
            continue
        if edge.confidence < graph.validity_floor:
            continue
        if edge.key in graph.quarantined:
            continue
        w = weights.get(edge.type, 0.0)
        if w > 0.0:
            out.append((edge, other.node_id, w))
    return out


def sample_path(
    graph: KnowledgeGraph,
    cur: CurriculumState,
    weights: dict[EdgeType, float],
    rng: random.Random,
    start: str | None = None,
) -> ReasoningPath:
    """One weighted random walk of up to cur.max_hops steps.

    The start is uniform over nodes with at least one traversable edge (or
    forced via `start`); each step draws among edges to unvisited neighbors
    with probability proportional to the type weight. A walk that strands
    early returns the shorter path.
    """
    effective = effective_weights(weights, cur)
    if start is not None:
        if start not in graph.nodes:
            raise GraphError(f"start node '{start}' not in graph")
        starts = [start]
    else:
        starts = [
            nid for nid in sorted(graph.nodes) if _step_candidates(graph, nid, {nid}, effective)
        ]
        if not starts:
            raise NoPathAvailable("graph has no traversable edge")
    origin = starts[0] if len(starts) == 1 else starts[rng.randrange(len(starts))]

    nodes = [origin]
    edges: list[KGEdge] = []
    visited = {origin}
    while len(edges) < cur.max_hops:
        candidates = _step_candidates(graph, nodes[-1], visited, effective)
        if not candidates:
            break
        total = sum(w for _, _, w in candidates)
        pick = rng.random() * total
        acc = 0.0
        chosen = candidates[-1]
        for cand in candidates:
            acc += cand[2]
            if pick < acc:
                chosen = cand
                break
        edge, nxt, _ = chosen
        edges.append(edge)
        nodes.append(nxt)
        visited.add(nxt)
    if not edges:
        raise NoPathAvailable(f"no traversable edge from '{origin}'")
    return ReasoningPath(tuple(nodes), tuple(edges))


def advance_curriculum(
    cur: CurriculumState,
    epoch_stats: dict[EdgeType, float],
    hop_schedule=DEFAULT_HOP_SCHEDULE,
    difficulty_schedule=DEFAULT_DIFFICULTY_SCHEDULE,
) -> CurriculumState:
    """Next epoch's state: hops and difficulty from their schedules, accuracy
    map replaced wholesale by the finished epoch's stats."""
    next_epoch = cur.epoch + 1
    next_hops = schedule_value(hop_schedule, next_epoch)
    if next_hops < cur.max_hops:
        raise GraphError(f"hop schedule decreases at epoch {next_epoch}: {next_hops} < {cur.max_hops}")
    return CurriculumState(
        epoch=next_epoch,
        max_hops=next_hops,
        per_type_accuracy=dict(epoch_stats),
        difficulty_level=schedule_value(difficulty_schedule, next_epoch),
    )
