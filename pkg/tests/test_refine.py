from __future__ import annotations

import math

import pytest

from kgplay.embeddings import EmbeddingProvider
from kgplay.errors import GraphError, StaleBatchError
from kgplay.kgstore import EdgeType, Fact, KGEdge, KGNode, KnowledgeGraph, NodeType
from kgplay.refine import (
    RefineConfig,
    RefinementBatch,
    apply_batch,
    build_refinement_batch,
    detect_missing,
    merge_nodes,
    prune_spurious,
)
from kgplay.rewards import RewardBreakdown, RewardWeights
from kgplay.sampling import ReasoningPath
from kgplay.selfplay import ProposedQuestion, QAEpisode, compute_advantages

from conftest import make_graph, text_nodes

WEIGHTS = RewardWeights(0.5, 0.3, 0.2)


def episode_on(g, path_nodes, declared, answer_scores, path_value=1.0):
    """Episode whose sampled path walks path_nodes through existing edges."""
    edges = []
    for u, v in zip(path_nodes, path_nodes[1:]):
        edge = next(
            e for e in g.incident_edges(u) if {e.src, e.dst} == {u, v}
        )
        edges.append(edge)
    path = ReasoningPath(tuple(path_nodes), tuple(edges))
    proposed = ProposedQuestion(
        question="q?",
        gold_answer="gold",
        path=path,
        declared_path=tuple(declared),
        question_type="Factual",
    )
    rewards = tuple(RewardBreakdown.compute(a, path_value, 1.0, WEIGHTS) for a in answer_scores)
    totals = [b.total for b in rewards]
    return QAEpisode(
        proposed=proposed,
        candidates=tuple("c" for _ in answer_scores),
        rewards=rewards,
        advantages=tuple(compute_advantages(totals)),
        kept=max(totals) > 0.5,
    )


def base_graph():
    return make_graph(
        text_nodes("a", "b", "c", "x", "y"),
        [("a", "b", "Supports", 0.9), ("b", "c", "References", 0.28)],
    )


# -- missing edge detection ------------------------------------------------------


def test_high_reward_unbacked_pair_proposed():
    g = base_graph()
    episode = episode_on(g, ["a", "b"], ["a", "b", "x", "y"], [1.0, 0.8])
    cfg = RefineConfig()
    proposals = detect_missing([episode], g, cfg)
    # (a,b) is backed; (b,x) and (x,y) are novel pairs of existing nodes
    assert {(e.src, e.dst) for e in proposals} == {("b", "x"), ("x", "y")}
    assert all(e.confidence == 0.5 for e in proposals)
    assert all(e.type == EdgeType.References for e in proposals)


def test_classifier_names_proposal_type():
    g = base_graph()
    episode = episode_on(g, ["a", "b"], ["b", "x"], [1.0])

    class OneLabel:
        def classify(self, src, dst, labels):
            return "Compares", 0.9

    proposals = detect_missing([episode], g, RefineConfig(), classifier=OneLabel())
    assert [e.type for e in proposals] == [EdgeType.Compares]
    assert proposals[0].confidence == 0.5  # classifier names the type, not the confidence


def test_below_threshold_reward_proposes_nothing():
    g = base_graph()
    episode = episode_on(g, ["a", "b"], ["b", "x"], [0.2, 0.3])  # max total 0.6 < 0.8
    assert episode.kept
    assert detect_missing([episode], g, RefineConfig()) == []


def test_duplicate_pairs_deduplicated():
    g = base_graph()
    first = episode_on(g, ["a", "b"], ["b", "x"], [1.0])
    second = episode_on(g, ["a", "b"], ["x", "b"], [1.0])
    proposals = detect_missing([first, second], g, RefineConfig())
    assert len(proposals) == 1


def test_unknown_ids_never_proposed():
    g = base_graph()
    episode = episode_on(g, ["a", "b"], ["a", "ghost", "b"], [1.0])
    assert detect_missing([episode], g, RefineConfig()) == []


def test_dropped_episodes_ignored():
    g = base_graph()
    episode = episode_on(g, ["a", "b"], ["b", "x"], [0.0], path_value=0.0)
    assert not episode.kept
    assert detect_missing([episode], g, RefineConfig()) == []


# -- spurious edge pruning --------------------------------------------------------


def test_single_implication_penalty_and_removal():
    g = base_graph()
    failing = episode_on(g, ["b", "c"], ["b", "c"], [0.0, 0.0])
    penalized, removed = prune_spurious([failing], g, RefineConfig())
    # 0.28 - 0.05 = 0.23 stays; run against the 0.18 edge below
    assert removed == []
    assert penalized == [(("b", "c", EdgeType.References), pytest.approx(-0.05))]

    g.upsert_edge(KGEdge("b", "c", EdgeType.References, 0.18))
    penalized, removed = prune_spurious([failing], g, RefineConfig())
    assert penalized == []
    assert removed == [("b", "c", EdgeType.References)]


def test_healthy_edge_survives_one_penalty():
    g = base_graph()
    failing = episode_on(g, ["a", "b"], ["a", "b"], [0.0])
    penalized, removed = prune_spurious([failing], g, RefineConfig())
    assert removed == []
    assert penalized == [(("a", "b", EdgeType.Supports), pytest.approx(-0.05))]


def test_successful_episodes_leave_edges_alone():
    g = base_graph()
    good = episode_on(g, ["a", "b"], ["a", "b"], [1.0, 0.0])
    penalized, removed = prune_spurious([good], g, RefineConfig())
    assert penalized == [] and removed == []


def test_three_implications_cross_the_floor():
    g = base_graph()  # (b, c) sits at 0.28
    episodes = [episode_on(g, ["b", "c"], ["b", "c"], [0.0]) for _ in range(3)]
    penalized, removed = prune_spurious(episodes, g, RefineConfig())
    # 0.28 - 3 * 0.05 = 0.13 < 0.15
    assert removed == [("b", "c", EdgeType.References)]
    assert penalized == []


def test_best_candidate_rule_uses_total():
    g = base_graph()
    # candidate 0: answer 0 but full path/consistency -> total 0.5
    # candidate 1: answer 1 but no path backing    -> total 0.7
    proposed = ProposedQuestion(
        question="q?",
        gold_answer="gold",
        path=ReasoningPath(("a", "b"), (g.get_edge(("a", "b", EdgeType.Supports)),)),
        declared_path=("a", "b"),
        question_type="Factual",
    )
    rewards = (
        RewardBreakdown.compute(0.0, 1.0, 1.0, WEIGHTS),
        RewardBreakdown.compute(1.0, 0.3, 0.35, WEIGHTS),
    )
    episode = QAEpisode(
        proposed=proposed,
        candidates=("c0", "c1"),
        rewards=rewards,
        advantages=tuple(compute_advantages([b.total for b in rewards])),
        kept=True,
    )
    # best by total is candidate 1 with answer_score 1.0: not a failing episode
    penalized, removed = prune_spurious([episode], g, RefineConfig())
    assert penalized == [] and removed == []


# -- node merging ------------------------------------------------------------------


def planted_similarity_graph():
    """Three same-type nodes with hand-planted embeddings at 0, 25 and 50
    degrees: adjacent pairs clear the 0.88 merge bar, the far pair does not."""
    g = make_graph(text_nodes("m::a", "m::b", "m::c", doc="m"))
    g.nodes["m::a"].embedding = [1.0, 0.0]
    g.nodes["m::b"].embedding = [math.cos(math.radians(25)), math.sin(math.radians(25))]
    g.nodes["m::c"].embedding = [math.cos(math.radians(50)), math.sin(math.radians(50))]
    return g


def test_identical_nodes_merge_and_edges_rehome(embedder):
    g = make_graph(
        [
            ("d::c1", "Concept", "d", "anchor routing"),
            ("d::c2", "Concept", "d", "anchor routing"),
            ("d::t", "TextBlock", "d", "some text"),
        ],
        [("d::t", "d::c2", "Defines", 0.6)],
    )
    g.nodes["d::c1"].facts.append(Fact("term", "anchor routing"))
    merges = merge_nodes(g, embedder)
    assert merges == [("d::c1", "d::c2")]
    batch = RefinementBatch(base_version=g.version, epoch=0, merges=merges)
    apply_batch(g, batch)
    assert "d::c2" not in g.nodes
    assert g.get_edge(("d::t", "d::c1", EdgeType.Defines)) is not None


def test_pair_below_merge_threshold_untouched(embedder):
    g = planted_similarity_graph()
    # cos(25 deg) = 0.906 > 0.88 merges; craft only the far pair
    g2 = make_graph(text_nodes("m::a", "m::c", doc="m"))
    g2.nodes["m::a"].embedding = [1.0, 0.0]
    g2.nodes["m::c"].embedding = [math.cos(math.radians(50)), math.sin(math.radians(50))]
    assert merge_nodes(g2, embedder) == []


def test_merge_transitive_closure(embedder):
    g = planted_similarity_graph()
    merges = merge_nodes(g, embedder)
    # a~b and b~c merge; a~c (cos 50 = 0.64) joins through the chain
    assert merges == [("m::a", "m::b"), ("m::a", "m::c")]


def test_merge_respects_type_and_document(embedder):
    g = make_graph(
        [
            ("d::c1", "Concept", "d", "same words"),
            ("d::t1", "TextBlock", "d", "same words"),
            ("e::c9", "Concept", "e", "same words"),
        ]
    )
    assert merge_nodes(g, embedder) == []


def test_merged_pair_internal_edge_dropped(embedder):
    g = make_graph(
        [
            ("d::c1", "Concept", "d", "anchor routing"),
            ("d::c2", "Concept", "d", "anchor routing"),
        ],
        [("d::c1", "d::c2", "Compares", 0.7)],
    )
    merges = merge_nodes(g, embedder)
    batch = RefinementBatch(base_version=g.version, epoch=0, merges=merges)
    apply_batch(g, batch)
    assert g.edge_count() == 0
    assert list(g.nodes) == ["d::c1"]


# -- batch application ----------------------------------------------------------------


def test_empty_batch_bumps_version_only():
    g = base_graph()
    before_edges = {e.key: e.confidence for e in g.edges}
    batch = RefinementBatch(base_version=g.version, epoch=0)
    apply_batch(g, batch)
    assert g.version == 1
    assert {e.key: e.confidence for e in g.edges} == before_edges


def test_add_and_remove_visible_together():
    g = base_graph()
    batch = RefinementBatch(
        base_version=g.version,
        epoch=0,
        added=[KGEdge("x", "y", EdgeType.References, 0.5)],
        removed=[("a", "b", EdgeType.Supports)],
    )
    apply_batch(g, batch)
    assert g.get_edge(("x", "y", EdgeType.References)) is not None
    assert g.get_edge(("a", "b", EdgeType.Supports)) is None


def test_stale_batch_rejected_and_double_apply_blocked():
    g = base_graph()
    batch = RefinementBatch(base_version=g.version, epoch=0)
    apply_batch(g, batch)
    with pytest.raises(StaleBatchError):
        apply_batch(g, batch)


def test_batch_against_future_version_rejected():
    g = base_graph()
    batch = RefinementBatch(base_version=g.version + 5, epoch=0)
    with pytest.raises(StaleBatchError):
        apply_batch(g, batch)


def test_bad_batch_leaves_graph_untouched():
    g = base_graph()
    before = {e.key: e.confidence for e in g.edges}
    batch = RefinementBatch(
        base_version=g.version,
        epoch=0,
        added=[KGEdge("x", "y", EdgeType.References, 0.5)],
        removed=[("x", "ghost", EdgeType.Supports)],
    )
    with pytest.raises(GraphError):
        apply_batch(g, batch)
    assert {e.key: e.confidence for e in g.edges} == before
    assert g.version == 0


def test_overlapping_edge_sets_rejected():
    g = base_graph()
    key = ("a", "b", EdgeType.Supports)
    batch = RefinementBatch(
        base_version=g.version,
        epoch=0,
        penalized=[(key, -0.05)],
        removed=[key],
    )
    with pytest.raises(GraphError, match="disjoint"):
        apply_batch(g, batch)


def test_quarantine_keeps_new_edges_out_of_sampling():
    import random

    from kgplay.sampling import CurriculumState, sample_path
    from kgplay.sampling import DEFAULT_EDGE_WEIGHTS

    g = base_graph()
    batch = RefinementBatch(
        base_version=g.version, epoch=0, added=[KGEdge("x", "y", EdgeType.References, 0.5)]
    )
    apply_batch(g, batch, quarantine_new_edges=True)
    assert g.quarantined == {("x", "y", EdgeType.References)}
    for seed in range(20):
        path = sample_path(g, CurriculumState(max_hops=3), DEFAULT_EDGE_WEIGHTS, random.Random(seed))
        assert "x" not in path.nodes and "y" not in path.nodes
    # reward-side validity is unaffected by quarantine
    assert g.has_valid_edge("x", "y")


def test_build_refinement_batch_composes(embedder):
    g = base_graph()
    high = episode_on(g, ["a", "b"], ["b", "x"], [1.0])
    failing = episode_on(g, ["b", "c"], ["b", "c"], [0.0])
    batch = build_refinement_batch([high, failing], g, RefineConfig(), epoch=3)
    assert batch.epoch == 3
    assert {(e.src, e.dst) for e in batch.added} == {("b", "x")}
    assert batch.penalized == [(("b", "c", EdgeType.References), pytest.approx(-0.05))]
    assert batch.removed == []
    apply_batch(g, batch)
    assert g.get_edge(("b", "c", EdgeType.References)).confidence == pytest.approx(0.23)


def test_refine_config_validation():
    with pytest.raises(GraphError):
        RefineConfig(tau_prune=0.0)
    with pytest.raises(GraphError):
        RefineConfig(high_reward_threshold=1.0)


def test_audit_log_serialization(tmp_path):
    from kgplay.refine import append_audit_log

    g = base_graph()
    batch = RefinementBatch(
        base_version=0,
        epoch=2,
        added=[KGEdge("x", "y", EdgeType.References, 0.5)],
        penalized=[(("a", "b", EdgeType.Supports), -0.05)],
        removed=[("b", "c", EdgeType.References)],
        merges=[("a", "b")],
    )
    log = tmp_path / "audit.jsonl"
    append_audit_log(batch, log)
    append_audit_log(batch, log)
    import json

    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert len(lines) == 2
    assert lines[0]["epoch"] == 2
    assert lines[0]["added"] == [["x", "y", "References", 0.5]]
