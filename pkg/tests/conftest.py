from __future__ import annotations

from pathlib import Path

import pytest

from kgplay.construct import ConstructConfig, build_document_graph, federate
from kgplay.corpus_ir import load_document
from kgplay.embeddings import EmbeddingProvider
from kgplay.kgstore import EdgeType, KGEdge, KGNode, KnowledgeGraph, NodeType
from kgplay.model_client import ScriptedRelationClassifier, load_scenario

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def embedder() -> EmbeddingProvider:
    return EmbeddingProvider()


def make_graph(nodes, edges=(), validity_floor: float = 0.15) -> KnowledgeGraph:
    """nodes: (node_id, type, doc_id, content) tuples; edges: (src, dst, type, conf)."""
    g = KnowledgeGraph(validity_floor=validity_floor)
    for node_id, node_type, doc_id, content in nodes:
        g.upsert_node(KGNode(node_id=node_id, type=NodeType(node_type), doc_id=doc_id, content=content))
    for src, dst, edge_type, conf in edges:
        g.upsert_edge(KGEdge(src, dst, EdgeType(edge_type), conf))
    return g


def text_nodes(*ids, doc="doc"):
    return [(nid, "TextBlock", doc, f"content of {nid}") for nid in ids]


def build_fixture_corpus(embedder: EmbeddingProvider):
    """Per-document graphs for the three fixture papers, built with the
    scripted relation classifier."""
    classifier = ScriptedRelationClassifier(load_scenario(FIXTURES / "scenario_construct.json"))
    config = ConstructConfig()
    graphs = []
    for name in ("paperA", "paperB", "paperC"):
        doc = load_document(FIXTURES / f"{name}.json")
        graph, _findings = build_document_graph(doc, embedder, classifier, config)
        graphs.append(graph)
    return graphs


@pytest.fixture(scope="session")
def federated_fixture_graph() -> KnowledgeGraph:
    embedder = EmbeddingProvider()
    return federate(build_fixture_corpus(embedder), embedder, tau_cross=0.85)
