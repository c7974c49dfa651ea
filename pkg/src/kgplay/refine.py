"""Post-epoch graph co-evolution: add edges the model discovered, penalize
edges implicated in failures, prune what falls below the confidence floor,
and optionally merge near-duplicate nodes.

A batch is built against a frozen snapshot and applied atomically between
epochs; applying a batch built against any other graph version is rejected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .embeddings import EmbeddingProvider, content_similarity
from .errors import GraphError, StaleBatchError
from .kgstore import SEMANTIC_EDGE_TYPES, EdgeKey, EdgeType, KGEdge, KnowledgeGraph
from .selfplay import QAEpisode


@dataclass
class RefineConfig:
    high_reward_threshold: float = 0.8
    confidence_penalty: float = 0.05
    new_edge_confidence: float = 0.5
    tau_prune: float = 0.15
    tau_merge: float = 0.88
    quarantine_new_edges: bool = False

    def __post_init__(self):
        for name in ("high_reward_threshold", "confidence_penalty", "new_edge_confidence", "tau_prune", "tau_merge"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise GraphError(f"{name} must lie in (0, 1), got {value}")


@dataclass
class RefinementBatch:
    base_version: int
    epoch: int
    added: list[KGEdge] = field(default_factory=list)
    penalized: list[tuple[EdgeKey, float]] = field(default_factory=list)  # (key, delta)
    removed: list[EdgeKey] = field(default_factory=list)
    merges: list[tuple[str, str]] = field(default_factory=list)  # (kept, dropped)

    def edge_key_sets(self) -> tuple[set, set, set]:
        return (
            {e.key for e in self.added},
            {k for k, _ in self.penalized},
            set(self.removed),
        )

    def to_json_dict(self) -> dict:
        return {
            "base_version": self.base_version,
            "epoch": self.epoch,
            "added": [[e.src, e.dst, e.type.value, e.confidence] for e in self.added],
            "penalized": [[k[0], k[1], k[2].value, delta] for k, delta in self.penalized],
            "removed": [[k[0], k[1], k[2].value] for k in self.removed],
            "merges": [[kept, dropped] for kept, dropped in self.merges],
        }


def _best_candidate_index(episode: QAEpisode) -> int:
    return max(range(len(episode.rewards)), key=lambda i: (episode.rewards[i].total, -i))


def detect_missing(
    episodes: list[QAEpisode],
    graph: KnowledgeGraph,
    cfg: RefineConfig,
    classifier=None,
) -> list[KGEdge]:
    """Edge proposals from high-reward episodes whose declared chain cites
    pairs the graph does not connect.

    Only pairs of existing nodes become proposals (an edge cannot dangle);
    the relation classifier names the type, falling back to References.
    Duplicate pairs across episodes collapse to the first orientation seen.
    """
    proposals: dict[frozenset, KGEdge] = {}
    labels = sorted(t.value for t in SEMANTIC_EDGE_TYPES)
    for episode in episodes:
        if not episode.kept:
            continue
        if max(b.total for b in episode.rewards) < cfg.high_reward_threshold:
            continue
        declared = episode.proposed.declared_path
        for u, v in zip(declared, declared[1:]):
            if u == v or graph.has_valid_edge(u, v):
                continue
            if u not in graph.nodes or v not in graph.nodes:
                continue
            pair = frozenset((u, v))
            if pair in proposals:
                continue
            label = None
            if classifier is not None:
                label, _conf = classifier.classify(graph.nodes[u].content, graph.nodes[v].content, labels)
            edge_type = EdgeType(label) if label in labels else EdgeType.References
            proposals[pair] = KGEdge(u, v, edge_type, cfg.new_edge_confidence)
    return list(proposals.values())


def prune_spurious(
    episodes: list[QAEpisode],
    graph: KnowledgeGraph,
    cfg: RefineConfig,
) -> tuple[list[tuple[EdgeKey, float]], list[EdgeKey]]:
    """Cumulative confidence penalties for edges on the sampled paths of
    failing episodes (best candidate scored zero on the answer), splitting
    the results into still-alive penalties and below-floor removals."""
    implicated: dict[EdgeKey, int] = {}
    for episode in episodes:
        best = _best_candidate_index(episode)
        if episode.rewards[best].answer_score != 0.0:
            continue
        for edge in episode.proposed.path.edges:
            if graph.get_edge(edge.key) is None:
                continue
            implicated[edge.key] = implicated.get(edge.key, 0) + 1
    penalized: list[tuple[EdgeKey, float]] = []
    removed: list[EdgeKey] = []
    for key in sorted(implicated, key=lambda k: (k[0], k[1], k[2].value)):
        delta = -cfg.confidence_penalty * implicated[key]
        new_conf = graph.get_edge(key).confidence + delta
        if new_conf < cfg.tau_prune:
            removed.append(key)
        else:
            penalized.append((key, delta))
    return penalized, removed


def merge_nodes(
    graph: KnowledgeGraph,
    embedder: EmbeddingProvider,
    tau_merge: float = 0.88,
) -> list[tuple[str, str]]:
    """Same-type, same-document pairs above the merge threshold, closed
    transitively (union-find); the lexicographically smallest id survives."""
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            keep, drop = (ra, rb) if ra < rb else (rb, ra)
            parent[drop] = keep

    ids = sorted(graph.nodes)
    for nid in ids:
        parent[nid] = nid
    for i, u in enumerate(ids):
        nu = graph.nodes[u]
        for v in ids[i + 1 :]:
            nv = graph.nodes[v]
            if nu.doc_id != nv.doc_id or nu.type != nv.type:
                continue
            if content_similarity(embedder, graph, u, v) > tau_merge:
                union(u, v)

    merges: list[tuple[str, str]] = []
    for nid in ids:
        root = find(nid)
        if root != nid:
            merges.append((root, nid))
    return merges


def build_refinement_batch(
    episodes: list[QAEpisode],
    graph: KnowledgeGraph,
    cfg: RefineConfig,
    epoch: int,
    classifier=None,
    embedder: EmbeddingProvider | None = None,
    include_merges: bool = False,
) -> RefinementBatch:
    batch = RefinementBatch(base_version=graph.version, epoch=epoch)
    batch.added = detect_missing(episodes, graph, cfg, classifier)
    batch.penalized, batch.removed = prune_spurious(episodes, graph, cfg)
    if include_merges:
        if embedder is None:
            raise GraphError("node merging requires an embedder")
        batch.merges = merge_nodes(graph, embedder, cfg.tau_merge)
    added_keys, penalized_keys, removed_keys = batch.edge_key_sets()
    if added_keys & penalized_keys or added_keys & removed_keys or penalized_keys & removed_keys:
        raise GraphError("refinement batch edge sets must be disjoint")
    return batch


def apply_batch(graph: KnowledgeGraph, batch: RefinementBatch, quarantine_new_edges: bool = False) -> None:
    """Apply adds, penalties, removals, and merges in one step.

    Validates everything before touching the graph so a bad batch leaves it
    unmodified; bumps the graph version so the same batch cannot run twice.
    """
    if batch.base_version != graph.version:
        raise StaleBatchError(
            f"batch built against version {batch.base_version}, graph is at {graph.version}"
        )
    added_keys, penalized_keys, removed_keys = batch.edge_key_sets()
    if added_keys & penalized_keys or added_keys & removed_keys or penalized_keys & removed_keys:
        raise GraphError("refinement batch edge sets must be disjoint")
    for edge in batch.added:
        if edge.src not in graph.nodes or edge.dst not in graph.nodes:
            raise GraphError(f"batch adds edge with missing endpoint: {edge.key}")
    for key, _delta in batch.penalized:
        if graph.get_edge(key) is None:
            raise GraphError(f"batch penalizes unknown edge {key}")
    for key in batch.removed:
        if graph.get_edge(key) is None:
            raise GraphError(f"batch removes unknown edge {key}")
    for kept, dropped in batch.merges:
        if kept not in graph.nodes or dropped not in graph.nodes:
            raise GraphError(f"batch merges unknown node pair ({kept}, {dropped})")

    for edge in batch.added:
        graph.upsert_edge(edge)
    for key, delta in batch.penalized:
        graph.adjust_confidence(key, delta)
    for key in batch.removed:
        graph.remove_edge(key)
    for kept, dropped in batch.merges:
        _merge_into(graph, kept, dropped)
    graph.quarantined = {e.key for e in batch.added} if quarantine_new_edges else set()
    graph.version += 1


def _merge_into(graph: KnowledgeGraph, kept: str, dropped: str) -> None:
    keep_node = graph.nodes[kept]
    drop_node = graph.nodes[dropped]
    existing = set(keep_node.facts)
    for fact in drop_node.facts:
        if fact not in existing:
            keep_node.facts.append(fact)
            existing.add(fact)
    for edge in list(graph.incident_edges(dropped)):
        src = kept if edge.src == dropped else edge.src
        dst = kept if edge.dst == dropped else edge.dst
        graph.remove_edge(edge.key)
        if src == dst:
            continue  # the pair being merged was itself linked
        previous = graph.get_edge((src, dst, edge.type))
        confidence = max(previous.confidence, edge.confidence) if previous else edge.confidence
        graph.upsert_edge(KGEdge(src, dst, edge.type, confidence))
    graph.remove_node(dropped)


def append_audit_log(batch: RefinementBatch, path: str | Path) -> None:
    with Path(path).open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(batch.to_json_dict(), ensure_ascii=False) + "\n")
