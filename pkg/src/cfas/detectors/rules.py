"""Rule-table loading. Tables ship as plain data files (one entry per
line, tab-separated) so they are auditable and swappable: the same loader
reads the packaged defaults and any bundle synced from the Back-End."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

DEFAULT_VERSION = "builtin-1"

RULE_FILES = (
    "distress_lexicon.tsv",
    "bullying_lexicon.tsv",
    "grooming_stages.tsv",
    "profanity_lexicon.tsv",
    "video_rules.tsv",
    "meme_blocklist.tsv",
    "thresholds.json",
)


@dataclass
class RuleTables:
    version: str = DEFAULT_VERSION
    distress: dict[str, tuple[str, float]] = field(default_factory=dict)  # token -> (class, weight)
    bullying: dict[str, float] = field(default_factory=dict)  # phrase -> weight
    grooming_stages: dict[str, str] = field(default_factory=dict)  # phrase -> stage
    profanity: dict[str, float] = field(default_factory=dict)
    video_terms: dict[str, str] = field(default_factory=dict)  # term -> class
    meme_blocklist: set[int] = field(default_factory=set)  # 64-bit perceptual hashes
    thresholds: dict = field(default_factory=dict)

    def decide_threshold(self, mechanism: str) -> float:
        table = self.thresholds.get("decide_thresholds", {})
        return float(table.get(mechanism, table.get("default", 0.5)))

    def knob(self, name: str, default: float) -> float:
        return float(self.thresholds.get(name, default))


def _read_tsv(text: str) -> list[list[str]]:
    rows = []
    for line in text.splitlines():
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        rows.append(line.split("\t"))
    return rows


def load_rule_tables(directory: Path | None = None, version: str | None = None) -> RuleTables:
    """Load tables from a bundle directory, or the packaged defaults."""

    def read(name: str) -> str:
        if directory is not None:
            path = Path(directory) / name
            return path.read_text(encoding="utf-8") if path.exists() else ""
        ref = resources.files("cfas.detectors") / "data" / name
        return ref.read_text(encoding="utf-8")

    tables = RuleTables(version=version or DEFAULT_VERSION)
    for token, cls, weight in _read_tsv(read("distress_lexicon.tsv")):
        tables.distress[token.lower()] = (cls, float(weight))
    for phrase, weight in _read_tsv(read("bullying_lexicon.tsv")):
        tables.bullying[phrase.lower()] = float(weight)
    for phrase, stage in _read_tsv(read("grooming_stages.tsv")):
        tables.grooming_stages[phrase.lower()] = stage
    for term, weight in _read_tsv(read("profanity_lexicon.tsv")):
        tables.profanity[term.lower()] = float(weight)
    for term, cls in _read_tsv(read("video_rules.tsv")):
        tables.video_terms[term.lower()] = cls
    for row in _read_tsv(read("meme_blocklist.tsv")):
        tables.meme_blocklist.add(int(row[0], 16))
    raw = read("thresholds.json")
    tables.thresholds = json.loads(raw) if raw else {}
    return tables


def dump_rule_tables(tables: RuleTables, directory: Path) -> None:
    """Write tables back out in the bundle file layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "distress_lexicon.tsv").write_text(
        "".join(f"{t}\t{c}\t{w}\n" for t, (c, w) in sorted(tables.distress.items())), encoding="utf-8"
    )
    (directory / "bullying_lexicon.tsv").write_text(
        "".join(f"{t}\t{w}\n" for t, w in sorted(tables.bullying.items())), encoding="utf-8"
    )
    (directory / "grooming_stages.tsv").write_text(
        "".join(f"{p}\t{s}\n" for p, s in sorted(tables.grooming_stages.items())), encoding="utf-8"
    )
    (directory / "profanity_lexicon.tsv").write_text(
        "".join(f"{t}\t{w}\n" for t, w in sorted(tables.profanity.items())), encoding="utf-8"
    )
    (directory / "video_rules.tsv").write_text(
        "".join(f"{t}\t{c}\n" for t, c in sorted(tables.video_terms.items())), encoding="utf-8"
    )
    (directory / "meme_blocklist.tsv").write_text(
        "".join(f"{h:016x}\n" for h in sorted(tables.meme_blocklist)), encoding="utf-8"
    )
    (directory / "thresholds.json").write_text(json.dumps(tables.thresholds, indent=2), encoding="utf-8")
