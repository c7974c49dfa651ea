"""Generation and relation-classification clients.

Two families: HTTP clients speaking the wire contracts (POST /v1/generate and
POST /v1/classify-relation), and scripted clients driven by a scenario file so
every orchestration test runs offline and deterministically. Scripted
responses are pure functions of the request plus a per-role call ordinal.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import EndpointError, ParseError, SchemaError

ROLE_PROPOSER = "Proposer"
ROLE_SOLVER = "Solver"
ROLE_CLASSIFIER = "Classifier"

DEFAULT_MAX_TOKENS = 256

_NODE_SENTINEL_RE = re.compile(r"\[node:([^\]\s]+)\]")
_QUOTED_RE = re.compile(r'"([^"]+)"')
_GOLD_LINE_RE = re.compile(r"^GOLD ANSWER:\s*(.*)$", re.MULTILINE)


@dataclass(frozen=True)
class GenerationRequest:
    role: str
    prompt: str
    image_refs: tuple[str, ...] = ()
    n: int = 1
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.role not in (ROLE_PROPOSER, ROLE_SOLVER, ROLE_CLASSIFIER):
            raise SchemaError(f"unknown role {self.role!r}")
        if self.n < 1:
            raise SchemaError("n must be >= 1")
        if self.temperature < 0:
            raise SchemaError("temperature must be >= 0")


class HttpGenerationClient:
    """Talks to the generation endpoint; one retry on transport failure."""

    def __init__(self, base_url: str, timeout: float = 120.0, retries: int = 1):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries

    def generate(self, request: GenerationRequest) -> list[str]:
        payload = {
            "role": request.role,
            "prompt": request.prompt,
            "images": list(request.image_refs),
            "n": request.n,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "seed": request.seed,
        }
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(self.base_url + "/v1/generate", json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise EndpointError(f"generate endpoint returned {resp.status_code}: {resp.text[:200]}")
            try:
                candidates = resp.json()["candidates"]
            except (ValueError, KeyError) as exc:
                raise EndpointError(f"generate endpoint returned malformed body: {exc}") from exc
            if not isinstance(candidates, list) or len(candidates) != request.n:
                raise EndpointError(f"generate endpoint returned {len(candidates)} candidates, wanted {request.n}")
            return [str(c) for c in candidates]
        raise EndpointError(f"generate endpoint unreachable: {last_exc}")


class HttpRelationClassifier:
    def __init__(self, base_url: str, timeout: float = 60.0, retries: int = 1):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries

    def classify(self, src_text: str, dst_text: str, labels: list[str]) -> tuple[str | None, float]:
        payload = {"src_text": src_text, "dst_text": dst_text, "labels": list(labels)}
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(self.base_url + "/v1/classify-relation", json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise EndpointError(f"classify endpoint returned {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
                label = body["label"]
                confidence = float(body["confidence"])
            except (ValueError, KeyError, TypeError) as exc:
                raise EndpointError(f"classify endpoint returned malformed body: {exc}") from exc
            return (None if label in (None, "None", "null", "") else str(label)), confidence
        raise EndpointError(f"classify endpoint unreachable: {last_exc}")


# -- scripted scenario ------------------------------------------------------


@dataclass
class _ScenarioRule:
    role: str
    responses: list[str]
    prompt_contains: str | None = None
    ordinal: int | None = None

    def matches(self, request: GenerationRequest, ordinal: int) -> bool:
        if self.role != request.role:
            return False
        if self.ordinal is not None and self.ordinal != ordinal:
            return False
        if self.prompt_contains is not None and self.prompt_contains not in request.prompt:
            return False
        return True


@dataclass
class Scenario:
    proposer_behavior: str = "quote_gold"
    solver_behavior: str = "echo_quoted"
    solver_correct_count: int | None = None
    solver_wrong_text: str = "The records are inconclusive on this point."
    solver_wrong_every_nth: int | None = None
    solver_fixed_text: str = ""
    proposer_fixed_text: str = ""
    rules: list[_ScenarioRule] = field(default_factory=list)
    classifier_rules: list[dict] = field(default_factory=list)
    classifier_default_label: str | None = None
    classifier_default_confidence: float = 0.0


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    scenario = Scenario()
    proposer = raw.get("proposer", {})
    scenario.proposer_behavior = proposer.get("behavior", scenario.proposer_behavior)
    scenario.proposer_fixed_text = proposer.get("text", "")
    solver = raw.get("solver", {})
    scenario.solver_behavior = solver.get("behavior", scenario.solver_behavior)
    scenario.solver_correct_count = solver.get("correct_count")
    scenario.solver_wrong_text = solver.get("wrong_text", scenario.solver_wrong_text)
    scenario.solver_wrong_every_nth = solver.get("wrong_every_nth")
    scenario.solver_fixed_text = solver.get("text", "")
    classifier = raw.get("classifier", {})
    scenario.classifier_rules = list(classifier.get("rules", []))
    scenario.classifier_default_label = classifier.get("default_label")
    scenario.classifier_default_confidence = float(classifier.get("default_confidence", 0.0))
    for i, rule in enumerate(raw.get("rules", [])):
        try:
            scenario.rules.append(
                _ScenarioRule(
                    role=rule["role"],
                    responses=[str(r) for r in rule["responses"]],
                    prompt_contains=rule.get("prompt_contains"),
                    ordinal=rule.get("ordinal"),
                )
            )
        except KeyError as exc:
            raise SchemaError(f"{path}: rules[{i}] missing {exc}") from exc
    return scenario


def _prompt_node_ids(prompt: str) -> list[str]:
    seen: dict[str, None] = {}
    for nid in _NODE_SENTINEL_RE.findall(prompt):
        seen.setdefault(nid)
    return list(seen)


def _prompt_gold(prompt: str) -> str:
    match = _GOLD_LINE_RE.search(prompt)
    return match.group(1).strip() if match else ""


class ScriptedGenerationClient:
    """Deterministic stand-in for the generation endpoint.

    Explicit rules (matched on role + ordinal/prompt substring) win; otherwise
    the per-role behavior runs:

    Proposer `quote_gold` emits a question that names the path's node ids and
    quotes the gold answer it was shown — a degenerate but perfectly auditable
    question style. `declare_sampled` emits the same declared path without the
    quote; `fixed` emits configured text; `malformed` violates the output
    contract on purpose.

    Solver `echo_quoted` answers with the last double-quoted span of the
    prompt; `correct_count` limits how many of the n candidates do so, and
    `wrong_every_nth` makes every nth solver call answer entirely wrong.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._ordinals: dict[str, int] = {}

    def generate(self, request: GenerationRequest) -> list[str]:
        ordinal = self._ordinals.get(request.role, 0)
        self._ordinals[request.role] = ordinal + 1
        for rule in self.scenario.rules:
            if rule.matches(request, ordinal):
                reps = (request.n + len(rule.responses) - 1) // len(rule.responses)
                return (rule.responses * reps)[: request.n]
        if request.role == ROLE_PROPOSER:
            return [self._proposer_response(request)] * request.n
        if request.role == ROLE_SOLVER:
            return self._solver_responses(request, ordinal)
        return [""] * request.n

    def _proposer_response(self, request: GenerationRequest) -> str:
        behavior = self.scenario.proposer_behavior
        if behavior == "fixed":
            return self.scenario.proposer_fixed_text
        if behavior == "malformed":
            return "I would rather chat about the weather."
        ids = _prompt_node_ids(request.prompt)
        path_line = " -> ".join(ids)
        chain = " -> ".join(f"[node:{nid}]" for nid in ids)
        if behavior == "declare_sampled":
            question = f"Following the chain {chain}, what does the terminal node state?"
        else:  # quote_gold
            gold = _prompt_gold(request.prompt)
            question = (
                f"Following the chain {chain}, what does the terminal node state? "
                f'(reference: "{gold}")'
            )
        return f"QUESTION: {question}\nPATH: {path_line}"

    def _solver_responses(self, request: GenerationRequest, ordinal: int) -> list[str]:
        behavior = self.scenario.solver_behavior
        wrong = f"ANSWER: {self.scenario.solver_wrong_text}"
        if behavior == "fixed":
            return [f"ANSWER: {self.scenario.solver_fixed_text}"] * request.n
        nth = self.scenario.solver_wrong_every_nth
        if nth and (ordinal % nth) == nth - 1:
            return [wrong] * request.n
        quoted = _QUOTED_RE.findall(request.prompt)
        if not quoted:
            return [wrong] * request.n
        correct = f"ANSWER: {quoted[-1]}"
        limit = self.scenario.solver_correct_count
        if limit is None:
            return [correct] * request.n
        return [correct if i < limit else wrong for i in range(request.n)]


class ScriptedRelationClassifier:
    """Pair -> label table; first matching rule wins, else the default."""

    def __init__(self, scenario: Scenario):
        self.rules = scenario.classifier_rules
        self.default_label = scenario.classifier_default_label
        self.default_confidence = scenario.classifier_default_confidence

    def classify(self, src_text: str, dst_text: str, labels: list[str]) -> tuple[str | None, float]:
        for rule in self.rules:
            src_needle = rule.get("src_contains")
            dst_needle = rule.get("dst_contains")
            if src_needle is not None and src_needle.lower() not in src_text.lower():
                continue
            if dst_needle is not None and dst_needle.lower() not in dst_text.lower():
                continue
            label = rule.get("label")
            return (None if label in (None, "None") else str(label)), float(rule.get("confidence", 0.5))
        label = self.default_label
        return (None if label in (None, "None") else str(label)), self.default_confidence
