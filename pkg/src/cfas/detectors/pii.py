"""Personal-information detection over text the child is about to publish.

Pure regex rules per category; credit-card candidates must additionally
pass a Luhn checksum. Locale targeted: en-US formats.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass

from ..policy import MechanismKind
from .base import Detector, DetectionResult, Evidence

CATEGORIES = (
    "date",
    "time",
    "phone",
    "link",
    "email",
    "ip",
    "ipv6",
    "price",
    "credit_card",
    "street_address",
    "zip_code",
)


@dataclass(frozen=True)
class PiiFinding:
    category: str
    span: tuple[int, int]
    matched_text: str


_MONTHS = r"(?:Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|Jun(?:e)?|Jul(?:y)?|Aug(?:ust)?|Sep(?:tember)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)"

_PATTERNS: dict[str, re.Pattern] = {
    "date": re.compile(
        rf"\b(?:\d{{1,2}}/\d{{1,2}}/\d{{2,4}}|\d{{4}}-\d{{2}}-\d{{2}}|{_MONTHS}\.? \d{{1,2}}(?:st|nd|rd|th)?,? \d{{4}})\b"
    ),
    "time": re.compile(r"\b\d{1,2}:\d{2}(?::\d{2})?(?:\s?[ap]\.?m\.?)?\b", re.IGNORECASE),
    "phone": re.compile(
        r"(?<![\d.])(?:\+?\d{1,3}[-. ]?)?(?:\(\d{3}\)\s?|\d{3}[-. ])?\d{3}[-. ]\d{4}"
        r"(?:\s?(?:ext\.?|x)\s?\d{1,5})?(?![\d.])"
    ),
    "link": re.compile(r"\b(?:https?://|www\.)[^\s<>\"')]+"),
    "email": re.compile(r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b"),
    "ip": re.compile(r"(?<![\d.])(?:\d{1,3}\.){3}\d{1,3}(?![\d.])"),
    "ipv6": re.compile(r"(?<![0-9A-Fa-f:.])(?:[0-9A-Fa-f]{1,4}:){2,7}[0-9A-Fa-f:]*(?:[0-9A-Fa-f]{1,4})?(?![0-9A-Fa-f:])"),
    "price": re.compile(
        r"[$€£]\s?\d[\d,]*(?:\.\d{1,2})?|\b\d[\d,]*(?:\.\d{1,2})?\s?(?:dollars|bucks|usd|eur|euros?)\b",
        re.IGNORECASE,
    ),
    "credit_card": re.compile(r"(?<![\d-])(?:\d[ -]?){12,18}\d(?![\d-])"),
    "street_address": re.compile(
        r"\b\d{1,5}\s+(?:[A-Z][A-Za-z]+\s+){1,3}"
        r"(?:Street|St|Avenue|Ave|Road|Rd|Boulevard|Blvd|Lane|Ln|Drive|Dr|Court|Ct|Way|Place|Pl)\.?\b"
    ),
    "zip_code": re.compile(r"(?<![\d-])\d{5}(?:-\d{4})?(?![\d-])"),
}


def luhn_valid(digits: str) -> bool:
    """Luhn mod-10 checksum over a digit string."""
    if not digits.isdigit() or len(digits) < 2:
        return False
    total = 0
    parity = len(digits) % 2
    for i, ch in enumerate(digits):
        d = int(ch)
        if i % 2 == parity:  # every second digit from the right
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


_EXT_RE = re.compile(r"\s?(?:ext\.?|x)\s?\d{1,5}$", re.IGNORECASE)


def _valid(category: str, text: str) -> bool:
    if category == "phone":
        # keeps card fragments and ZIP+4 out: US numbers are 7, 10, or 11
        # digits (the 11th being the country code)
        base = _EXT_RE.sub("", text)
        return len(re.sub(r"\D", "", base)) in (7, 10, 11)
    if category == "ip":
        try:
            ipaddress.IPv4Address(text)
            return True
        except ValueError:
            return False
    if category == "ipv6":
        try:
            ipaddress.IPv6Address(text)
            return True
        except ValueError:
            return False
    if category == "credit_card":
        digits = re.sub(r"[ -]", "", text)
        return 13 <= len(digits) <= 19 and luhn_valid(digits)
    return True


def detect_pii(text: str) -> list[PiiFinding]:
    """All PII findings in `text`, non-overlapping within each category,
    with exact character spans."""
    findings: list[PiiFinding] = []
    for category in CATEGORIES:
        last_end = -1
        for match in _PATTERNS[category].finditer(text):
            if match.start() < last_end:
                continue
            matched = match.group(0)
            if not _valid(category, matched):
                continue
            findings.append(PiiFinding(category, (match.start(), match.end()), matched))
            last_end = match.end()
    findings.sort(key=lambda f: (f.span[0], f.span[1], f.category))
    return findings


class PiiDetector(Detector):
    def __init__(self, version: str) -> None:
        super().__init__(MechanismKind.PII_EXPOSURE, version)

    def analyze(self, payload: dict) -> DetectionResult:
        text = payload.get("text") or ""
        findings = detect_pii(text)
        evidence = [Evidence(span=f.span, snippet=f.matched_text) for f in findings]
        return self._result(
            label="pii_found" if findings else "clean",
            scores={"pii": 1.0 if findings else 0.0},
            evidence=evidence,
        )
