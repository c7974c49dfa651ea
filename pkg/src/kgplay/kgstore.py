"""Knowledge-graph data model, queries, confidence bookkeeping, and snapshots.

Edges are stored directed (src -> dst as produced by construction) but path
validity is tested undirected: a declared step in either narrative direction
counts, provided some connecting edge sits at or above the validity floor.
The floor doubles as the pruning threshold so that an edge destined for
removal stops validating paths even before it is physically deleted.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import GraphError, ParseError, SchemaError

SNAPSHOT_SCHEMA_VERSION = 1

# Confidence floor below which an edge no longer validates a path. Matches the
# default pruning threshold used by refinement.
DEFAULT_VALIDITY_FLOOR = 0.15


class NodeType(str, Enum):
    TextBlock = "TextBlock"
    Figure = "Figure"
    Table = "Table"
    Equation = "Equation"
    Concept = "Concept"
    Claim = "Claim"


class EdgeType(str, Enum):
    Contains = "Contains"
    HasCaption = "HasCaption"
    References = "References"
    Illustrates = "Illustrates"
    Quantifies = "Quantifies"
    Defines = "Defines"
    Supports = "Supports"
    Contradicts = "Contradicts"
    DerivesFrom = "DerivesFrom"
    Compares = "Compares"
    SameConcept = "SameConcept"


# The five labels the relation classifier may assign during semantic linking.
SEMANTIC_EDGE_TYPES = frozenset(
    {EdgeType.Illustrates, EdgeType.Supports, EdgeType.Contradicts, EdgeType.DerivesFrom, EdgeType.Compares}
)

EdgeKey = tuple[str, str, EdgeType]


@dataclass(frozen=True)
class Fact:
    """One verifiable item attached to a node: a number or a key term."""

    kind: str  # "numeric" | "term"
    value: float | str
    context: str = ""

    def __post_init__(self):
        if self.kind not in ("numeric", "term"):
            raise GraphError(f"fact kind must be 'numeric' or 'term', got {self.kind!r}")
        if self.kind == "numeric":
            if not isinstance(self.value, (int, float)) or isinstance(self.value, bool):
                raise GraphError("numeric fact value must be a real number")
            if not math.isfinite(float(self.value)):
                raise GraphError("numeric fact value must be finite")
        elif not isinstance(self.value, str):
            raise GraphError("term fact value must be a string")


@dataclass
class KGNode:
    node_id: str
    type: NodeType
    doc_id: str
    content: str
    facts: list[Fact] = field(default_factory=list)
    embedding: list[float] | None = None
    # Provenance carried for downstream operations: reference resolution needs
    # labels, question proposing needs image refs, and blocks remember their
    # section path since sections are not nodes.
    label: str | None = None
    image_ref: str | None = None
    section_path: tuple[str, ...] = ()

    def __post_init__(self):
        self.type = NodeType(self.type)
        if self.type in (NodeType.Concept, NodeType.Claim) and not self.content.strip():
            raise GraphError(f"{self.type.value} node '{self.node_id}' must have non-empty content")


@dataclass(frozen=True)
class KGEdge:
    src: str
    dst: str
    type: EdgeType
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "type", EdgeType(self.type))
        if not (0.0 <= self.confidence <= 1.0):
            raise GraphError(f"edge confidence {self.confidence} outside [0, 1]")
        if self.src == self.dst:
            raise GraphError(f"self-loop edge on '{self.src}'")

    @property
    def key(self) -> EdgeKey:
        return (self.src, self.dst, self.type)


class KnowledgeGraph:
    """Typed multimodal nodes plus confidence-weighted typed edges.

    Single-writer / multi-reader: mutation happens between epochs under
    exclusive access, queries are read-only and safe to run concurrently
    against a quiescent graph.
    """

    def __init__(self, validity_floor: float = DEFAULT_VALIDITY_FLOOR):
        self.nodes: dict[str, KGNode] = {}
        self._edges: dict[EdgeKey, KGEdge] = {}
        self._incident: dict[str, set[EdgeKey]] = {}
        self.validity_floor = validity_floor
        self.version = 0
        # Edge keys excluded from path sampling until the next refinement
        # cycle (opt-in quarantine for freshly detected edges).
        self.quarantined: set[EdgeKey] = set()

    # -- basic queries ------------------------------------------------------

    @property
    def edges(self) -> list[KGEdge]:
        return list(self._edges.values())

    def edge_count(self) -> int:
        return len(self._edges)

    def get_edge(self, key: EdgeKey) -> KGEdge | None:
        return self._edges.get((key[0], key[1], EdgeType(key[2])))

    def incident_edges(self, node_id: str) -> list[KGEdge]:
        return [self._edges[k] for k in self._incident.get(node_id, ())]

    # -- mutation -----------------------------------------------------------

    def upsert_node(self, node: KGNode) -> None:
        """Insert or replace; identical input leaves the graph unchanged."""
        self.nodes[node.node_id] = node
        self._incident.setdefault(node.node_id, set())

    def upsert_edge(self, edge: KGEdge) -> None:
        """Insert, or replace the confidence of an existing (src, dst, type)."""
        if edge.src not in self.nodes:
            raise GraphError(f"edge source '{edge.src}' not in graph")
        if edge.dst not in self.nodes:
            raise GraphError(f"edge destination '{edge.dst}' not in graph")
        self._edges[edge.key] = edge
        self._incident[edge.src].add(edge.key)
        self._incident[edge.dst].add(edge.key)

    def remove_edge(self, key: EdgeKey) -> None:
        key = (key[0], key[1], EdgeType(key[2]))
        if key not in self._edges:
            raise GraphError(f"edge {key} not in graph")
        del self._edges[key]
        self._incident[key[0]].discard(key)
        self._incident[key[1]].discard(key)
        self.quarantined.discard(key)

    def remove_node(self, node_id: str) -> None:
        if node_id not in self.nodes:
            raise GraphError(f"node '{node_id}' not in graph")
        for key in list(self._incident.get(node_id, ())):
            self.remove_edge(key)
        self._incident.pop(node_id, None)
        del self.nodes[node_id]

    def adjust_confidence(self, key: EdgeKey, delta: float) -> float:
        """Shift an edge's confidence, clamped to [0, 1]; returns the new value."""
        key = (key[0], key[1], EdgeType(key[2]))
        edge = self._edges.get(key)
        if edge is None:
            raise GraphError(f"edge {key} not in graph")
        new_conf = min(1.0, max(0.0, edge.confidence + delta))
        self._edges[key] = KGEdge(edge.src, edge.dst, edge.type, new_conf)
        return new_conf

    # -- path-facing queries --------------------------------------------------

    def has_valid_edge(self, u: str, v: str) -> bool:
        """True iff any edge of any type connects u and v in either direction
        with confidence at or above the validity floor. Unknown ids are false,
        never an error: declared paths may cite nodes that do not exist."""
        if u not in self.nodes or v not in self.nodes:
            return False
        for key in self._incident[u]:
            src, dst, _ = key
            if (src == u and dst == v) or (src == v and dst == u):
                if self._edges[key].confidence >= self.validity_floor:
                    return True
        return False

    def neighbors(self, u: str, edge_types: set[EdgeType] | None = None) -> list[tuple[KGEdge, KGNode]]:
        """Incident edges in both directions, replay-deterministic order:
        sorted by the far node id, then edge type."""
        if u not in self.nodes:
            raise GraphError(f"node '{u}' not in graph")
        out = []
        for key in self._incident[u]:
            edge = self._edges[key]
            if edge_types is not None and edge.type not in edge_types:
                continue
            other = edge.dst if edge.src == u else edge.src
            out.append((edge, self.nodes[other]))
        out.sort(key=lambda pair: (pair[1].node_id, pair[0].type.value))
        return out

    # -- persistence ----------------------------------------------------------

    def _node_record(self, node: KGNode) -> dict:
        rec: dict = {
            "node_id": node.node_id,
            "type": node.type.value,
            "doc_id": node.doc_id,
            "content": node.content,
            "facts": [[f.kind, f.value, f.context] for f in node.facts],
        }
        if node.embedding is not None:
            rec["embedding"] = node.embedding
        if node.label is not None:
            rec["label"] = node.label
        if node.image_ref is not None:
            rec["image_ref"] = node.image_ref
        if node.section_path:
            rec["section_path"] = list(node.section_path)
        return rec

    def save_snapshot(self, directory: str | Path) -> Path:
        """Write nodes.jsonl + edges.jsonl + manifest.json, line order sorted
        by id so two snapshots of equal graphs are byte-identical."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        node_lines = [
            json.dumps(self._node_record(self.nodes[nid]), ensure_ascii=False, sort_keys=True)
            for nid in sorted(self.nodes)
        ]
        edge_lines = [
            json.dumps(
                {"src": e.src, "dst": e.dst, "type": e.type.value, "confidence": e.confidence},
                ensure_ascii=False,
                sort_keys=True,
            )
            for e in sorted(self._edges.values(), key=lambda e: (e.src, e.dst, e.type.value))
        ]
        nodes_blob = ("\n".join(node_lines) + "\n") if node_lines else ""
        edges_blob = ("\n".join(edge_lines) + "\n") if edge_lines else ""
        digest = hashlib.sha256()
        digest.update(nodes_blob.encode("utf-8"))
        digest.update(edges_blob.encode("utf-8"))
        manifest = {
            "schema_version": SNAPSHOT_SCHEMA_VERSION,
            "corpus_hash": digest.hexdigest(),
            "node_count": len(self.nodes),
            "edge_count": len(self._edges),
            "validity_floor": self.validity_floor,
        }
        (directory / "nodes.jsonl").write_text(nodes_blob, encoding="utf-8")
        (directory / "edges.jsonl").write_text(edges_blob, encoding="utf-8")
        (directory / "manifest.json").write_text(
            json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        return directory

    @classmethod
    def load_snapshot(cls, directory: str | Path) -> "KnowledgeGraph":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise ParseError(f"{directory}: missing manifest.json")
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{manifest_path}: invalid JSON: {exc}") from exc
        if manifest.get("schema_version") != SNAPSHOT_SCHEMA_VERSION:
            raise SchemaError(f"{manifest_path}: unsupported schema_version {manifest.get('schema_version')}")
        graph = cls(validity_floor=manifest.get("validity_floor", DEFAULT_VALIDITY_FLOOR))

        nodes_path = directory / "nodes.jsonl"
        for lineno, line in enumerate(_read_lines(nodes_path), start=1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{nodes_path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                node = KGNode(
                    node_id=rec["node_id"],
                    type=NodeType(rec["type"]),
                    doc_id=rec["doc_id"],
                    content=rec["content"],
                    facts=[Fact(kind=f[0], value=f[1], context=f[2]) for f in rec.get("facts", [])],
                    embedding=rec.get("embedding"),
                    label=rec.get("label"),
                    image_ref=rec.get("image_ref"),
                    section_path=tuple(rec.get("section_path", ())),
                )
            except (KeyError, ValueError, GraphError) as exc:
                raise SchemaError(f"{nodes_path}:{lineno}: bad node record: {exc}") from exc
            graph.upsert_node(node)

        edges_path = directory / "edges.jsonl"
        for lineno, line in enumerate(_read_lines(edges_path), start=1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{edges_path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                edge = KGEdge(rec["src"], rec["dst"], EdgeType(rec["type"]), rec["confidence"])
            except (KeyError, ValueError, GraphError) as exc:
                raise SchemaError(f"{edges_path}:{lineno}: bad edge record: {exc}") from exc
            try:
                graph.upsert_edge(edge)
            except GraphError as exc:
                raise SchemaError(f"{edges_path}:{lineno}: {exc}") from exc
        return graph


def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        raise ParseError(f"{path}: missing snapshot file")
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def graphs_equal(a: KnowledgeGraph, b: KnowledgeGraph) -> bool:
    """Deep structural equality over nodes (including facts) and edges."""
    if set(a.nodes) != set(b.nodes):
        return False
    for nid, node in a.nodes.items():
        other = b.nodes[nid]
        if (
            node.type != other.type
            or node.doc_id != other.doc_id
            or node.content != other.content
            or node.facts != other.facts
            or node.embedding != other.embedding
            or node.label != other.label
            or node.image_ref != other.image_ref
            or tuple(node.section_path) != tuple(other.section_path)
        ):
            return False
    return {e.key: e.confidence for e in a.edges} == {e.key: e.confidence for e in b.edges}
