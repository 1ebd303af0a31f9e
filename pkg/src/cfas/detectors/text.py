"""Chat-window detectors: distress affect scoring, grooming stage rules,
and cyberbullying insult density.

All three consume a sliding conversation window (most recent messages,
both directions); each applies its own directionality — distress looks at
the child's outbound messages, bullying at inbound, grooming at both.
"""

from __future__ import annotations

import re

from ..policy import MechanismKind
from .base import Detector, DetectionResult, Evidence
from .rules import RuleTables

WINDOW_SIZE = 50

_TOKEN_RE = re.compile(r"[a-z']+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def detect_distress(messages: list[str], tables: RuleTables) -> dict[str, float]:
    """Affect scores over the child's outbound chat window.

    score(class) = matched lexicon weight mass / total token count,
    clamped to [0,1]. Empty window scores zero everywhere.
    """
    scores = {"angry": 0.0, "frustrated": 0.0, "sad": 0.0}
    tokens = [t for msg in messages for t in tokenize(msg)]
    if not tokens:
        return scores
    mass = {cls: 0.0 for cls in scores}
    for token in tokens:
        hit = tables.distress.get(token)
        if hit:
            cls, weight = hit
            mass[cls] += weight
    total = len(tokens)
    return {cls: min(1.0, mass[cls] / total) for cls in scores}


def _phrase_hits(text: str, phrases) -> list[str]:
    lowered = text.lower()
    return [p for p in phrases if p in lowered]


def detect_grooming(messages: list[dict], tables: RuleTables) -> tuple[bool, list[int], set[str]]:
    """Staged grooming rules over both sides of a conversation window.

    Positive when matches cover at least `grooming_min_stages` distinct
    stages. Returns (positive, matching message indices, stages hit).
    """
    min_stages = int(tables.knob("grooming_min_stages", 2))
    stages_hit: set[str] = set()
    hit_indices: list[int] = []
    for idx, msg in enumerate(messages):
        hits = _phrase_hits(msg.get("text", ""), tables.grooming_stages)
        if hits:
            hit_indices.append(idx)
            stages_hit.update(tables.grooming_stages[p] for p in hits)
    return len(stages_hit) >= min_stages, hit_indices, stages_hit


def detect_cyberbullying(messages: list[dict], tables: RuleTables, rate: float | None = None) -> tuple[bool, list[int], float]:
    """Insult density over inbound messages: positive when the fraction of
    inbound messages containing a lexicon hit reaches the configured rate."""
    if rate is None:
        rate = tables.knob("bullying_rate", 0.2)
    inbound = [(i, m) for i, m in enumerate(messages) if m.get("direction") == "in"]
    if not inbound:
        return False, [], 0.0
    hit_indices = [i for i, m in inbound if _phrase_hits(m.get("text", ""), tables.bullying)]
    density = len(hit_indices) / len(inbound)
    return density >= rate, hit_indices, density


def _window_evidence(messages: list[dict], indices: list[int]) -> list[Evidence]:
    return [
        Evidence(span=(i, i), snippet=messages[i].get("text", ""), unit="message")
        for i in indices
    ]


class DistressDetector(Detector):
    def __init__(self, version: str, tables: RuleTables) -> None:
        super().__init__(MechanismKind.DISTRESS, version)
        self._tables = tables

    def analyze(self, payload: dict) -> DetectionResult:
        messages = payload.get("messages") or []
        outbound = [m.get("text", "") for m in messages if m.get("direction") == "out"]
        scores = detect_distress(outbound, self._tables)
        label = "distress" if max(scores.values(), default=0.0) > self._tables.decide_threshold("distress") else "none"
        return self._result(label, scores)


class GroomingDetector(Detector):
    def __init__(self, version: str, tables: RuleTables) -> None:
        super().__init__(MechanismKind.GROOMING, version)
        self._tables = tables

    def analyze(self, payload: dict) -> DetectionResult:
        messages = payload.get("messages") or []
        positive, indices, stages = detect_grooming(messages, self._tables)
        return self._result(
            "grooming" if positive else "none",
            {"grooming": 1.0 if positive else 0.0},
            _window_evidence(messages, indices) if positive else [],
        )


class CyberbullyingDetector(Detector):
    def __init__(self, version: str, tables: RuleTables) -> None:
        super().__init__(MechanismKind.CYBERBULLYING, version)
        self._tables = tables

    def analyze(self, payload: dict) -> DetectionResult:
        messages = payload.get("messages") or []
        positive, indices, density = detect_cyberbullying(messages, self._tables)
        return self._result(
            "cyberbullying" if positive else "none",
            {"cyberbullying": 1.0 if positive else 0.0},
            _window_evidence(messages, indices) if positive else [],
        )
