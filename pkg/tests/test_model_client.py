from __future__ import annotations

import pytest

from kgplay.errors import EndpointError, SchemaError
from kgplay.model_client import (
    GenerationRequest,
    HttpGenerationClient,
    HttpRelationClassifier,
    Scenario,
    ScriptedGenerationClient,
    ScriptedRelationClassifier,
    load_scenario,
)

PROPOSER_PROMPT = """You are the Proposer. Write one VQA question of type Factual that requires following the relation chain below.
Ask one question whose answer is the content of the terminal node.
PATH NODES:
- [node:docX::b1] (TextBlock) Some opening content.
- [node:docX::b2] (Figure) A caption here.
EDGE TYPES: References
TERMINAL NODE: [node:docX::b2]
GOLD ANSWER: A caption here.
Respond exactly in this format:
QUESTION: <the question>
PATH: <node ids joined by ' -> '>"""


def test_request_validation():
    with pytest.raises(SchemaError):
        GenerationRequest(role="Oracle", prompt="x")
    with pytest.raises(SchemaError):
        GenerationRequest(role="Solver", prompt="x", n=0)
    with pytest.raises(SchemaError):
        GenerationRequest(role="Solver", prompt="x", temperature=-1)


def test_quote_gold_proposer_reads_prompt():
    client = ScriptedGenerationClient(Scenario(proposer_behavior="quote_gold"))
    out = client.generate(GenerationRequest(role="Proposer", prompt=PROPOSER_PROMPT))[0]
    assert "QUESTION:" in out and "PATH:" in out
    assert 'reference: "A caption here."' in out
    assert "PATH: docX::b1 -> docX::b2" in out


def test_declare_sampled_proposer_omits_gold():
    client = ScriptedGenerationClient(Scenario(proposer_behavior="declare_sampled"))
    out = client.generate(GenerationRequest(role="Proposer", prompt=PROPOSER_PROMPT))[0]
    assert "reference:" not in out
    assert "PATH: docX::b1 -> docX::b2" in out


def test_echo_quoted_solver():
    client = ScriptedGenerationClient(Scenario(solver_behavior="echo_quoted"))
    prompt = 'Answer the question concisely.\nQUESTION: What is stated? (reference: "42 things")\n'
    out = client.generate(GenerationRequest(role="Solver", prompt=prompt, n=3))
    assert out == ["ANSWER: 42 things"] * 3


def test_echo_quoted_correct_count():
    client = ScriptedGenerationClient(Scenario(solver_behavior="echo_quoted", solver_correct_count=2))
    prompt = 'QUESTION: What? (reference: "gold text")'
    out = client.generate(GenerationRequest(role="Solver", prompt=prompt, n=4))
    assert out[0] == out[1] == "ANSWER: gold text"
    assert "gold text" not in out[2] and "gold text" not in out[3]


def test_wrong_every_nth_solver_call():
    scenario = Scenario(solver_behavior="echo_quoted", solver_wrong_every_nth=3)
    client = ScriptedGenerationClient(scenario)
    prompt = 'QUESTION: What? (reference: "right")'
    results = []
    for _ in range(6):
        out = client.generate(GenerationRequest(role="Solver", prompt=prompt, n=1))
        results.append("right" in out[0])
    assert results == [True, True, False, True, True, False]


def test_solver_without_quote_answers_wrong():
    client = ScriptedGenerationClient(Scenario(solver_behavior="echo_quoted"))
    out = client.generate(GenerationRequest(role="Solver", prompt="QUESTION: unquoted?", n=1))
    assert out[0].startswith("ANSWER:")


def load_scenario_from_dict(payload):
    import json
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as td:
        p = Path(td) / "scenario.json"
        p.write_text(json.dumps(payload), encoding="utf-8")
        return load_scenario(p)


def test_rules_match_on_ordinal_and_substring():
    scenario = load_scenario_from_dict(
        {
            "rules": [
                {"role": "Solver", "ordinal": 1, "responses": ["ANSWER: second call"]},
                {"role": "Solver", "prompt_contains": "magic", "responses": ["ANSWER: matched"]},
            ],
            "solver": {"behavior": "fixed", "text": "fallback"},
        }
    )
    client = ScriptedGenerationClient(scenario)
    first = client.generate(GenerationRequest(role="Solver", prompt="plain"))
    second = client.generate(GenerationRequest(role="Solver", prompt="plain"))
    third = client.generate(GenerationRequest(role="Solver", prompt="some magic here"))
    assert first == ["ANSWER: fallback"]
    assert second == ["ANSWER: second call"]
    assert third == ["ANSWER: matched"]


def test_rule_responses_cycle_to_n():
    scenario = load_scenario_from_dict(
        {"rules": [{"role": "Solver", "responses": ["ANSWER: a", "ANSWER: b"]}]}
    )
    client = ScriptedGenerationClient(scenario)
    out = client.generate(GenerationRequest(role="Solver", prompt="x", n=5))
    assert out == ["ANSWER: a", "ANSWER: b", "ANSWER: a", "ANSWER: b", "ANSWER: a"]


def test_scripted_classifier_rules_and_default():
    scenario = load_scenario_from_dict(
        {
            "classifier": {
                "rules": [{"src_contains": "alpha", "dst_contains": "beta", "label": "Supports", "confidence": 0.7}],
                "default_label": None,
                "default_confidence": 0.1,
            }
        }
    )
    clf = ScriptedRelationClassifier(scenario)
    assert clf.classify("ALPHA text", "some BETA", ["Supports"]) == ("Supports", 0.7)
    assert clf.classify("alpha", "gamma", ["Supports"]) == (None, 0.1)


def test_scenario_file_round_trip(fixtures_dir):
    scenario = load_scenario(fixtures_dir / "scenario_smoke.json")
    assert scenario.proposer_behavior == "quote_gold"
    assert scenario.solver_correct_count == 6
    assert scenario.solver_wrong_every_nth == 4
    assert len(scenario.classifier_rules) == 2


class _FakeResponse:
    def __init__(self, status_code, payload):
        self.status_code = status_code
        self._payload = payload
        self.text = str(payload)

    def json(self):
        return self._payload


def test_http_generation_round_trip(monkeypatch):
    seen = {}

    def fake_post(url, json=None, timeout=None):
        seen["url"] = url
        seen["payload"] = json
        return _FakeResponse(200, {"candidates": ["one", "two"]})

    monkeypatch.setattr("kgplay.model_client.requests.post", fake_post)
    client = HttpGenerationClient("http://model:8000/")
    out = client.generate(GenerationRequest(role="Solver", prompt="q?", n=2, seed=5))
    assert out == ["one", "two"]
    assert seen["url"] == "http://model:8000/v1/generate"
    assert seen["payload"]["n"] == 2 and seen["payload"]["seed"] == 5
    assert seen["payload"]["role"] == "Solver"


def test_http_generation_candidate_count_enforced(monkeypatch):
    monkeypatch.setattr(
        "kgplay.model_client.requests.post",
        lambda url, json=None, timeout=None: _FakeResponse(200, {"candidates": ["only one"]}),
    )
    client = HttpGenerationClient("http://model:8000")
    with pytest.raises(EndpointError):
        client.generate(GenerationRequest(role="Solver", prompt="q?", n=2))


def test_http_generation_5xx(monkeypatch):
    monkeypatch.setattr(
        "kgplay.model_client.requests.post",
        lambda url, json=None, timeout=None: _FakeResponse(503, {}),
    )
    with pytest.raises(EndpointError):
        HttpGenerationClient("http://m:1").generate(GenerationRequest(role="Solver", prompt="x"))


def test_http_classifier_round_trip(monkeypatch):
    monkeypatch.setattr(
        "kgplay.model_client.requests.post",
        lambda url, json=None, timeout=None: _FakeResponse(200, {"label": "Compares", "confidence": 0.66}),
    )
    clf = HttpRelationClassifier("http://clf:1")
    assert clf.classify("a", "b", ["Compares"]) == ("Compares", 0.66)


def test_http_classifier_null_label(monkeypatch):
    monkeypatch.setattr(
        "kgplay.model_client.requests.post",
        lambda url, json=None, timeout=None: _FakeResponse(200, {"label": None, "confidence": 0.0}),
    )
    clf = HttpRelationClassifier("http://clf:1")
    assert clf.classify("a", "b", ["Compares"]) == (None, 0.0)
