"""Document-to-graph construction: structural scaffold, cross-reference edges,
concept/claim extraction, embedding-filtered semantic linking, and
cross-document federation.

Stage discipline: the structural pass emits only Contains/HasCaption, the
reference pass only References, the semantic pass only the five classifier
labels, and federation only SameConcept. Later stages add nodes and edges but
never remove or retype what an earlier stage built, so with a deterministic
embedder and a scripted classifier the whole pipeline is a pure function of
the corpus.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus_ir import DocumentIR, Finding
from .embeddings import EmbeddingProvider, content_similarity
from .errors import GraphError, ProtocolError
from .kgstore import (
    SEMANTIC_EDGE_TYPES,
    EdgeType,
    Fact,
    KGEdge,
    KGNode,
    KnowledgeGraph,
    NodeType,
)
from .textutil import STOPWORDS, extract_numbers, keywords, split_sentences, tokenize

# Reference patterns name their capture group after the target block kind;
# the group's value is the canonical reference number.
DEFAULT_REFERENCE_PATTERNS = (
    r"(?:Figure|Fig\.?)\s*(?P<figure>\d+)",
    r"Table\s*(?P<table>\d+)",
    r"(?:Equation|Eq\.?)\s*\(?(?P<equation>\d+)\)?",
    r"Section\s*(?P<section>\d+(?:\.\d+)*)",
)

DEFAULT_CLAIM_MARKERS = (
    "outperforms",
    "better than",
    "worse than",
    "higher than",
    "lower than",
    "improves",
    "exceeds",
    "surpasses",
    "degrades",
    "we show",
    "we propose",
    "we find",
    "demonstrates",
    "shows that",
    "indicates that",
    "achieves",
    "suggests that",
    "results in",
)

_BLOCK_NODE_TYPE = {
    "text": NodeType.TextBlock,
    "figure": NodeType.Figure,
    "table": NodeType.Table,
    "equation": NodeType.Equation,
}

_CAPITALIZED_SPAN_RE = re.compile(r"\b[A-Z][A-Za-z0-9\-]*(?:\s+[A-Z][A-Za-z0-9\-]*)+\b")
_LEADING_SECTION_NUMBER_RE = re.compile(r"^\s*(\d+(?:\.\d+)*)\b")


@dataclass(frozen=True)
class RelationClassification:
    """Classifier verdict for one candidate node pair."""

    pair: tuple[str, str]
    label: EdgeType | None
    confidence: float


@dataclass
class ConstructConfig:
    tau_semantic: float = 0.75
    max_edges_per_node: int = 10
    tau_cross: float = 0.85
    reference_patterns: tuple[str, ...] = DEFAULT_REFERENCE_PATTERNS
    concept_min_freq: int = 2
    claim_markers: tuple[str, ...] = DEFAULT_CLAIM_MARKERS

    def __post_init__(self):
        for name, value in (("tau_semantic", self.tau_semantic), ("tau_cross", self.tau_cross)):
            if not (0.0 < value <= 1.0):
                raise GraphError(f"{name} must lie in (0, 1], got {value}")
        if self.max_edges_per_node < 1:
            raise GraphError("max_edges_per_node must be >= 1")

    def compiled_patterns(self):
        return [re.compile(p, re.IGNORECASE) for p in self.reference_patterns]


def block_node_id(doc_id: str, block_id: str) -> str:
    return f"{doc_id}::{block_id}"


def caption_node_id(doc_id: str, block_id: str) -> str:
    return f"{doc_id}::{block_id}::caption"


def section_node_id(doc_id: str, section_id: str) -> str:
    return f"{doc_id}::sec::{section_id}"


def concept_node_id(doc_id: str, index: int) -> str:
    # Content-free on purpose: ids travel inside questions as [node:...]
    # sentinels, and a surface form embedded in the id would leak the concept
    # to the Solver.
    return f"{doc_id}::concept::{index:03d}"


def _content_facts(text: str, extra_cells=None, label: str | None = None) -> list[Fact]:
    facts: list[Fact] = []
    if extra_cells:
        for cell in extra_cells:
            facts.append(Fact("numeric", cell.value, f"{cell.row_key}|{cell.col_key}"))
    for number in extract_numbers(text):
        facts.append(Fact("numeric", number, "text"))
    for term in sorted(keywords(text)):
        facts.append(Fact("term", term, "content"))
    if label:
        # A label like "Eq. (1)" is part of the node's verifiable surface:
        # answers citing it must not count as hallucinated.
        for number in extract_numbers(label):
            facts.append(Fact("numeric", number, "label"))
        for term in sorted(keywords(label)):
            facts.append(Fact("term", term, "label"))
    return facts


def _label_key(text: str | None, patterns) -> tuple[str, str] | None:
    """Canonical (kind, number) for a label like "Fig. 3" or "Eq. (5)"."""
    if not text:
        return None
    for pattern in patterns:
        match = pattern.search(text)
        if match:
            for kind, value in match.groupdict().items():
                if value is not None:
                    return (kind, value)
    return None


def build_structural(doc: DocumentIR, config: ConstructConfig | None = None) -> KnowledgeGraph:
    """Stage one: one node per block, caption nodes, containment edges.

    Sections are containers, not graph nodes. A section with a non-empty
    heading gets a surrogate TextBlock carrying the heading, linked by
    Contains to its member blocks and to child surrogates; heading-less
    sections survive only as section_path metadata on their blocks.
    """
    config = config or ConstructConfig()
    graph = KnowledgeGraph()

    owning_section: dict[str, tuple[str, tuple[str, ...]]] = {}
    surrogate_ids: dict[str, str] = {}
    parent_surrogate: dict[str, str | None] = {}

    parent_of: dict[str, str | None] = {}
    for section, path in doc.walk_sections():
        for child in section.children:
            parent_of[child.id] = section.id
        parent_of.setdefault(section.id, None)
        headed_path = tuple(h for h in path if h.strip())
        for bid in section.block_ids:
            owning_section[bid] = (section.id, headed_path)

    for section, path in doc.walk_sections():
        if not section.heading.strip():
            continue
        headed_path = tuple(h for h in path if h.strip())
        sid = section_node_id(doc.doc_id, section.id)
        surrogate_ids[section.id] = sid
        label = None
        num_match = _LEADING_SECTION_NUMBER_RE.match(section.heading)
        if num_match:
            label = f"Section {num_match.group(1)}"
        graph.upsert_node(
            KGNode(
                node_id=sid,
                type=NodeType.TextBlock,
                doc_id=doc.doc_id,
                content=section.heading,
                facts=_content_facts(section.heading, label=label),
                label=label,
                section_path=headed_path,
            )
        )

    for section_id, sid in surrogate_ids.items():
        parent = parent_of.get(section_id)
        while parent is not None and parent not in surrogate_ids:
            parent = parent_of.get(parent)
        parent_surrogate[section_id] = surrogate_ids.get(parent) if parent else None

    for section_id, sid in surrogate_ids.items():
        parent_sid = parent_surrogate.get(section_id)
        if parent_sid:
            graph.upsert_edge(KGEdge(parent_sid, sid, EdgeType.Contains, 1.0))

    for block in doc.blocks:
        _, path = owning_section[block.id]
        nid = block_node_id(doc.doc_id, block.id)
        graph.upsert_node(
            KGNode(
                node_id=nid,
                type=_BLOCK_NODE_TYPE[block.kind],
                doc_id=doc.doc_id,
                content=block.text,
                facts=_content_facts(block.text, block.numeric_cells, block.label),
                label=block.label,
                image_ref=block.image_ref,
                section_path=path,
            )
        )
        section_id = owning_section[block.id][0]
        sid = surrogate_ids.get(section_id)
        if sid:
            graph.upsert_edge(KGEdge(sid, nid, EdgeType.Contains, 1.0))
        if block.kind in ("figure", "table") and block.text.strip():
            cid = caption_node_id(doc.doc_id, block.id)
            graph.upsert_node(
                KGNode(
                    node_id=cid,
                    type=NodeType.TextBlock,
                    doc_id=doc.doc_id,
                    content=block.text,
                    facts=_content_facts(block.text),
                    section_path=path,
                )
            )
            graph.upsert_edge(KGEdge(nid, cid, EdgeType.HasCaption, 1.0))
    return graph


def build_reference(graph: KnowledgeGraph, doc: DocumentIR, config: ConstructConfig | None = None) -> list[Finding]:
    """Stage two: regex-matched cross references become References edges.

    Each match inside a text block is resolved against the labels of the
    document's figure/table/equation nodes (and numbered section surrogates).
    Unresolvable mentions become DanglingReference findings, not edges.
    """
    config = config or ConstructConfig()
    patterns = config.compiled_patterns()
    findings: list[Finding] = []

    targets: dict[tuple[str, str], str] = {}
    for nid in sorted(graph.nodes):
        node = graph.nodes[nid]
        if node.doc_id != doc.doc_id:
            continue
        key = _label_key(node.label, patterns)
        if key and key not in targets:
            targets[key] = nid

    for block in doc.blocks:
        if block.kind != "text":
            continue
        src = block_node_id(doc.doc_id, block.id)
        matches = []
        for pattern in patterns:
            for m in pattern.finditer(block.text):
                for kind, value in m.groupdict().items():
                    if value is not None:
                        matches.append((m.start(), kind, value, m.group(0)))
        matches.sort()
        for _, kind, value, matched_text in matches:
            target = targets.get((kind, value))
            if target is None:
                findings.append(
                    Finding(
                        "DanglingReference",
                        src,
                        f"'{matched_text.strip()}' resolves to no {kind} in document '{doc.doc_id}'",
                    )
                )
            elif target != src:
                graph.upsert_edge(KGEdge(src, target, EdgeType.References, 0.9))
    return findings


def _count_occurrences(phrase: str, lowered_text: str) -> int:
    pattern = r"(?<![a-z0-9])" + re.escape(phrase).replace(r"\ ", r"\s+") + r"(?![a-z0-9])"
    return len(re.findall(pattern, lowered_text))


def _phrase_in(phrase: str, lowered_text: str) -> bool:
    return _count_occurrences(phrase, lowered_text) > 0


def extract_concepts(graph: KnowledgeGraph, doc: DocumentIR, config: ConstructConfig | None = None) -> list[Finding]:
    """Deterministic fallback extractor for Concept and Claim nodes.

    Concepts: non-stopword n-grams (and capitalized multi-word spans) whose
    document frequency reaches concept_min_freq, with shorter candidates
    dropped when a longer kept phrase fully accounts for their occurrences.
    Claims: sentences carrying a comparative or assertive marker. Both link
    back to their source text blocks at confidence 0.6.
    """
    config = config or ConstructConfig()
    text_blocks = [(block_node_id(doc.doc_id, b.id), b.text) for b in doc.blocks if b.kind == "text"]
    if not text_blocks:
        return []
    full_text_lower = "\n".join(text for _, text in text_blocks).lower()

    candidates: set[str] = set()
    for _, text in text_blocks:
        tokens = tokenize(text)
        for n in (1, 2, 3, 4):
            for i in range(len(tokens) - n + 1):
                gram = tokens[i : i + n]
                if any(t in STOPWORDS for t in gram):
                    continue
                if any(t.isdigit() for t in gram):
                    continue
                if n == 1 and len(gram[0]) < 4:
                    continue
                candidates.add(" ".join(gram))
        for m in _CAPITALIZED_SPAN_RE.finditer(text):
            phrase = " ".join(tokenize(m.group(0)))
            if phrase:
                candidates.add(phrase)

    counts = {c: _count_occurrences(c, full_text_lower) for c in candidates}
    kept = {c for c, n in counts.items() if n >= config.concept_min_freq}
    pruned = set()
    for c in kept:
        for d in kept:
            if c != d and f" {c} " in f" {d} " and counts[c] == counts[d]:
                pruned.add(c)
                break
    concepts = sorted(kept - pruned, key=lambda c: (-counts[c], c))

    for index, phrase in enumerate(concepts):
        cid = concept_node_id(doc.doc_id, index)
        graph.upsert_node(
            KGNode(
                node_id=cid,
                type=NodeType.Concept,
                doc_id=doc.doc_id,
                content=phrase,
                facts=[Fact("term", phrase, "concept")],
            )
        )
        for nid, text in text_blocks:
            if _phrase_in(phrase, text.lower()):
                graph.upsert_edge(KGEdge(nid, cid, EdgeType.Defines, 0.6))

    markers = tuple(m.lower() for m in config.claim_markers)
    for nid, text in text_blocks:
        claim_index = 0
        for sentence in split_sentences(text):
            lowered = sentence.lower()
            if not any(marker in lowered for marker in markers):
                continue
            claim_id = f"{nid}::claim::{claim_index}"
            claim_index += 1
            graph.upsert_node(
                KGNode(
                    node_id=claim_id,
                    type=NodeType.Claim,
                    doc_id=doc.doc_id,
                    content=sentence,
                    facts=_content_facts(sentence),
                )
            )
            graph.upsert_edge(KGEdge(claim_id, nid, EdgeType.DerivesFrom, 0.6))
    return []


_SEMANTIC_SRC_TYPES = frozenset({NodeType.TextBlock, NodeType.Claim, NodeType.Concept})
_SEMANTIC_DST_TYPES = frozenset({NodeType.Figure, NodeType.Table, NodeType.Equation, NodeType.Claim, NodeType.TextBlock})


def _semantic_degree(graph: KnowledgeGraph, node_id: str) -> int:
    return sum(1 for e in graph.incident_edges(node_id) if e.type in SEMANTIC_EDGE_TYPES)


def build_semantic(
    graph: KnowledgeGraph,
    embedder: EmbeddingProvider,
    classifier,
    config: ConstructConfig | None = None,
) -> list[RelationClassification]:
    """Stage three: similarity-filtered candidate pairs, classifier-labeled.

    Candidates are same-document pairs drawn from (TextBlock|Claim|Concept) x
    (Figure|Table|Equation|Claim|TextBlock) whose embedding cosine reaches
    tau_semantic, ranked globally by similarity (ties by id pair) and capped
    at max_edges_per_node semantic edges per endpoint before classification.
    Returns every classifier verdict, labeled or not, for the build report.
    """
    config = config or ConstructConfig()
    node_ids = sorted(graph.nodes)
    candidates: list[tuple[float, str, str]] = []
    for i, u in enumerate(node_ids):
        nu = graph.nodes[u]
        for v in node_ids[i + 1 :]:
            nv = graph.nodes[v]
            if nu.doc_id != nv.doc_id:
                continue
            forward = nu.type in _SEMANTIC_SRC_TYPES and nv.type in _SEMANTIC_DST_TYPES
            backward = nv.type in _SEMANTIC_SRC_TYPES and nu.type in _SEMANTIC_DST_TYPES
            if not forward and not backward:
                continue
            src, dst = (u, v) if forward else (v, u)
            sim = content_similarity(embedder, graph, src, dst)
            if sim >= config.tau_semantic:
                candidates.append((sim, src, dst))

    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    allowed_labels = sorted(t.value for t in SEMANTIC_EDGE_TYPES)
    verdicts: list[RelationClassification] = []
    for sim, src, dst in candidates:
        if (
            _semantic_degree(graph, src) >= config.max_edges_per_node
            or _semantic_degree(graph, dst) >= config.max_edges_per_node
        ):
            continue
        label, confidence = classifier.classify(graph.nodes[src].content, graph.nodes[dst].content, allowed_labels)
        if label is None:
            verdicts.append(RelationClassification((src, dst), None, confidence))
            continue
        if label not in allowed_labels:
            raise ProtocolError(f"classifier returned label {label!r} outside {allowed_labels}")
        edge_type = EdgeType(label)
        graph.upsert_edge(KGEdge(src, dst, edge_type, confidence))
        verdicts.append(RelationClassification((src, dst), edge_type, confidence))
    return verdicts


def build_document_graph(
    doc: DocumentIR,
    embedder: EmbeddingProvider,
    classifier,
    config: ConstructConfig | None = None,
) -> tuple[KnowledgeGraph, list[Finding]]:
    """Run the full three-stage pipeline for one document."""
    config = config or ConstructConfig()
    graph = build_structural(doc, config)
    findings = build_reference(graph, doc, config)
    findings.extend(extract_concepts(graph, doc, config))
    build_semantic(graph, embedder, classifier, config)
    return graph, findings


def _copy_node(node: KGNode) -> KGNode:
    return KGNode(
        node_id=node.node_id,
        type=node.type,
        doc_id=node.doc_id,
        content=node.content,
        facts=list(node.facts),
        embedding=list(node.embedding) if node.embedding is not None else None,
        label=node.label,
        image_ref=node.image_ref,
        section_path=tuple(node.section_path),
    )


_FEDERATION_TYPES = frozenset({NodeType.Concept, NodeType.Claim, NodeType.TextBlock})


def federate(
    graphs: list[KnowledgeGraph],
    embedder: EmbeddingProvider,
    tau_cross: float = 0.85,
) -> KnowledgeGraph:
    """Union the per-document graphs and bridge near-duplicate concepts.

    Every cross-document pair of Concept/Claim/TextBlock nodes whose cosine
    strictly exceeds tau_cross gains a SameConcept edge with the similarity as
    its confidence. Node ids are doc-prefixed, so a collision means corrupt
    input, not a merge opportunity.
    """
    if not graphs:
        raise GraphError("federate requires at least one graph")
    union = KnowledgeGraph(validity_floor=graphs[0].validity_floor)
    for g in graphs:
        for nid in sorted(g.nodes):
            if nid in union.nodes:
                raise GraphError(f"node id collision across documents: '{nid}'")
            union.upsert_node(_copy_node(g.nodes[nid]))
        for edge in sorted(g.edges, key=lambda e: e.key):
            union.upsert_edge(edge)
    if len(graphs) == 1:
        return union

    linkable = [
        nid
        for nid in sorted(union.nodes)
        if union.nodes[nid].type in _FEDERATION_TYPES and union.nodes[nid].content.strip()
    ]
    for i, u in enumerate(linkable):
        for v in linkable[i + 1 :]:
            if union.nodes[u].doc_id == union.nodes[v].doc_id:
                continue
            sim = content_similarity(embedder, union, u, v)
            if sim > tau_cross:
                union.upsert_edge(KGEdge(u, v, EdgeType.SameConcept, min(sim, 1.0)))
    return union
