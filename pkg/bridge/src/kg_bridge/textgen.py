"""Generation backends for the /v1/generate contract.

The deterministic backend follows the format instructions it finds in the
prompt the way a cooperative instruction-tuned model would: as the Proposer it
emits a QUESTION/PATH pair grounded in the node ids and gold answer the prompt
shows it; as the Solver it answers from the question text alone, echoing a
quoted reference value when one exists. An optional transformers-backed mode
serves real weights behind the same interface.
"""
from __future__ import annotations

import re

try:  # optional heavy dependency
    from transformers import pipeline as hf_pipeline
except Exception:  # pragma: no cover - absent in the default install
    hf_pipeline = None

_NODE_SENTINEL_RE = re.compile(r"\[node:([^\]\s]+)\]")
_GOLD_LINE_RE = re.compile(r"^GOLD ANSWER:\s*(.*)$", re.MULTILINE)
_QUOTED_RE = re.compile(r'"([^"]+)"')
_QUESTION_LINE_RE = re.compile(r"^\s*QUESTION:\s*(.*)$", re.IGNORECASE | re.MULTILINE)


def _truncate(text: str, max_tokens: int) -> str:
    words = text.split(" ")
    if len(words) <= max_tokens:
        return text
    return " ".join(words[:max_tokens])


class DeterministicTextGenerator:
    """Pure function of (role, prompt, n, max_tokens); seed and temperature
    are accepted for contract compatibility and ignored."""

    def generate(self, role: str, prompt: str, n: int, max_tokens: int, temperature: float, seed: int) -> list[str]:
        if role == "Proposer":
            return [_truncate(self._propose(prompt), max_tokens)] * n
        if role == "Solver":
            return [_truncate(self._solve(prompt), max_tokens)] * n
        return [_truncate(self._solve(prompt), max_tokens)] * n

    def _propose(self, prompt: str) -> str:
        ids: dict[str, None] = {}
        for nid in _NODE_SENTINEL_RE.findall(prompt):
            ids.setdefault(nid)
        ordered = list(ids)
        gold_match = _GOLD_LINE_RE.search(prompt)
        gold = gold_match.group(1).strip() if gold_match else ""
        chain = " -> ".join(f"[node:{nid}]" for nid in ordered)
        if gold:
            question = (
                f"Following the chain {chain}, what does the terminal node state? "
                f'(reference: "{gold}")'
            )
        else:
            question = f"Following the chain {chain}, what does the terminal node state?"
        return f"QUESTION: {question}\nPATH: {' -> '.join(ordered)}"

    def _solve(self, prompt: str) -> str:
        quoted = _QUOTED_RE.findall(prompt)
        if quoted:
            return f"ANSWER: {quoted[-1]}"
        question = _QUESTION_LINE_RE.search(prompt)
        if question:
            return f"ANSWER: {question.group(1).strip()}"
        return "ANSWER: The available material does not state this."


class TransformersTextGenerator:  # pragma: no cover - needs model weights
    def __init__(self, model_id: str):
        if hf_pipeline is None:
            raise RuntimeError(
                "transformers is not installed; use the deterministic backend or "
                "install the real-models extra"
            )
        self._pipe = hf_pipeline("text-generation", model=model_id)

    def generate(self, role: str, prompt: str, n: int, max_tokens: int, temperature: float, seed: int) -> list[str]:
        import torch

        torch.manual_seed(seed)
        outputs = self._pipe(
            prompt,
            num_return_sequences=n,
            max_new_tokens=max_tokens,
            do_sample=temperature > 0,
            temperature=max(temperature, 1e-5),
            return_full_text=False,
        )
        return [o["generated_text"] for o in outputs]


def make_generator(spec: str):
    if spec == "deterministic":
        return DeterministicTextGenerator()
    if spec.startswith("hf:"):
        return TransformersTextGenerator(spec.split(":", 1)[1])
    raise ValueError(f"unknown model spec {spec!r}")
