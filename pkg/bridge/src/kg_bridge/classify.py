"""Keyword-cue relation classifier for the /v1/classify-relation contract.

Deterministic and intentionally conservative: a label is returned only when a
cue word appears in either text and the label is on the caller's allowed list.
"""
from __future__ import annotations

# Cue tables checked in order; first hit wins.
_CUES = (
    ("Contradicts", ("contradict", "worse", "degrad", "refute", "conflic", "drop", "fails")),
    ("Illustrates", ("illustrat", "overview", "depict", "diagram", "visualiz")),
    ("Supports", ("support", "consistent with", "confirm", "agree", "corroborat")),
    ("DerivesFrom", ("deriv", "follows from", "based on", "builds on")),
    ("Compares", ("compar", "versus", "relative to", "against the")),
)


class CueRelationClassifier:
    def classify(self, src_text: str, dst_text: str, labels: list[str]) -> tuple[str | None, float]:
        haystack = f"{src_text}\n{dst_text}".lower()
        for label, cues in _CUES:
            if label not in labels:
                continue
            for cue in cues:
                if cue in haystack:
                    return label, 0.8
        return None, 0.0
