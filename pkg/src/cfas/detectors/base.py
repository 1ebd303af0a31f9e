"""Detector interface and registry.

Every detection mechanism sits behind the same small surface so a trained
model can later replace a rule baseline without touching the pipeline.
Detectors are deterministic for a fixed version and never mutate stored
data; `detector_version` stamps every result with the implementation that
produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..policy import MechanismKind


@dataclass(frozen=True)
class Evidence:
    """A span inside the analyzed data. `unit` says what the span indexes:
    characters of a text payload or message offsets of a chat window."""

    span: tuple[int, int]
    snippet: str
    unit: str = "char"


@dataclass
class DetectionResult:
    label: str
    scores: dict[str, float] = field(default_factory=dict)
    evidence: list[Evidence] = field(default_factory=list)
    detector_version: str = ""

    def __post_init__(self) -> None:
        for name, value in self.scores.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"score {name}={value} outside [0,1]")

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "scores": dict(self.scores),
            "evidence": [
                {"span": list(e.span), "snippet": e.snippet, "unit": e.unit}
                for e in self.evidence
            ],
            "detector_version": self.detector_version,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DetectionResult":
        return cls(
            label=doc["label"],
            scores={k: float(v) for k, v in doc.get("scores", {}).items()},
            evidence=[
                Evidence(span=tuple(e["span"]), snippet=e["snippet"], unit=e.get("unit", "char"))
                for e in doc.get("evidence", [])
            ],
            detector_version=doc.get("detector_version", ""),
        )


ERROR_LABEL = "error"


def error_result(version: str, reason: str) -> DetectionResult:
    return DetectionResult(label=ERROR_LABEL, scores={}, evidence=[], detector_version=f"{version}:{reason}")


class Detector:
    """Base class: one mechanism, one version, one pure analyze function."""

    mechanism: MechanismKind
    version: str

    def __init__(self, mechanism: MechanismKind, version: str) -> None:
        self.mechanism = mechanism
        self.version = version

    def analyze(self, payload: dict) -> DetectionResult:  # pragma: no cover - abstract
        raise NotImplementedError

    def _result(self, label: str, scores: dict[str, float], evidence: Optional[list[Evidence]] = None) -> DetectionResult:
        return DetectionResult(label=label, scores=scores, evidence=evidence or [], detector_version=self.version)


class DetectorRegistry:
    """Mechanism -> detector map with atomic hot-swap between analyses."""

    def __init__(self) -> None:
        self._detectors: dict[MechanismKind, Detector] = {}

    def register(self, detector: Detector) -> None:
        self._detectors[detector.mechanism] = detector

    def get(self, mechanism: MechanismKind) -> Detector:
        return self._detectors[mechanism]

    def has(self, mechanism: MechanismKind) -> bool:
        return mechanism in self._detectors

    def mechanisms(self) -> set[MechanismKind]:
        return set(self._detectors)

    def swap(self, other: "DetectorRegistry") -> None:
        # single reference assignment keeps the swap atomic for readers
        self._detectors = dict(other._detectors)
