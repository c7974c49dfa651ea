"""Deterministic text helpers shared by fact extraction, rewards, and metrics.

Everything here is pure string processing: no models, no randomness. The
reward engine and the evaluation metrics must agree on what counts as a
number or a keyword, so both import from this module.
"""
from __future__ import annotations

import re

# Small fixed stopword list. Content words are whatever survives it.
STOPWORDS = frozenset(
    """
    a about above after again all also am an and any are as at be because been
    before being below between both but by can did do does doing down during
    each few for from further had has have having he her here hers him his how
    i if in into is it its itself just me more most my no nor not now of off
    on once only or other our ours out over own same she should so some such
    than that the their theirs them then there these they this those through
    to too under until up very was we were what when where which while who
    whom why will with yes you your yours
    """.split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")
# Signed decimals, optionally a percent sign; not glued to a word (so the 50
# inside "ResNet-50" is not a standalone number).
_NUMBER_RE = re.compile(r"(?<![A-Za-z0-9_.\-])[-+]?\d+(?:\.\d+)?\s?%?")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; hyphen/apostrophe-joined runs stay together."""
    return _TOKEN_RE.findall(text.lower())


def keywords(text: str) -> set[str]:
    """Content-word set: lowercased tokens minus stopwords and bare numbers."""
    out = set()
    for tok in tokenize(text):
        if tok in STOPWORDS:
            continue
        if re.fullmatch(r"[-+]?\d+(?:\.\d+)?", tok):
            continue
        out.add(tok)
    return out


def extract_numbers(text: str) -> list[float]:
    """All standalone numbers in order of appearance.

    Percent values are returned as their numeric part ("45%" -> 45.0).
    """
    values = []
    for match in _NUMBER_RE.finditer(text):
        raw = match.group(0).rstrip("%").strip()
        values.append(float(raw))
    return values


def split_sentences(text: str) -> list[str]:
    """Naive sentence split on terminal punctuation. Good enough for prose;
    abbreviations will over-split and that is acceptable here."""
    parts = [p.strip() for p in _SENTENCE_SPLIT_RE.split(text)]
    return [p for p in parts if p]


def first_sentence(text: str) -> str:
    sentences = split_sentences(text)
    return sentences[0] if sentences else text.strip()


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def format_number(value: float) -> str:
    """Render a float the way prose would: drop a trailing .0."""
    if value == int(value):
        return str(int(value))
    return repr(value)
