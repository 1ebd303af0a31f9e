"""Account-level mechanisms: abusive-account rules over a visited user's
recent posts, and the bot-check client against the (mock) remote API.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import requests

from ..policy import MechanismKind
from .base import Detector, DetectionResult
from .rules import RuleTables
from .text import tokenize

logger = logging.getLogger(__name__)

MAX_POSTS = 20

_MENTION_RE = re.compile(r"@(\w+)")


@dataclass
class AccountFeatures:
    username: str
    recent_posts: list[dict] = field(default_factory=list)  # {"text": str, "retweet": bool}
    followers: int = 0
    post_count: int = 0

    def __post_init__(self) -> None:
        if len(self.recent_posts) > MAX_POSTS:
            raise ValueError(f"at most {MAX_POSTS} recent posts")


def classify_account(features: AccountFeatures, tables: RuleTables) -> str:
    """Label a visited account as spam, bully, aggressive, or normal.

    spam: more than half the recent posts are duplicates of one text;
    bully: insult-lexicon hits repeatedly address the same @mention;
    aggressive: profanity token rate over the configured threshold.
    Priority when several fire: spam > bully > aggressive.
    """
    posts = features.recent_posts
    if not posts:
        return "normal"
    texts = [p.get("text", "") for p in posts]

    normalized = [t.strip().lower() for t in texts]
    _, top_count = Counter(normalized).most_common(1)[0]
    if top_count / len(posts) > tables.knob("duplicate_post_ratio", 0.5):
        return "spam"

    insult_targets: Counter = Counter()
    for text in texts:
        lowered = text.lower()
        if any(term in lowered for term in tables.bullying):
            for target in _MENTION_RE.findall(text):
                insult_targets[target.lower()] += 1
    if insult_targets and insult_targets.most_common(1)[0][1] >= 2:
        return "bully"

    tokens = [t for text in texts for t in tokenize(text)]
    if tokens:
        profane = sum(1 for t in tokens if t in tables.profanity)
        if profane / len(tokens) > tables.knob("profanity_rate", 0.15):
            return "aggressive"
    return "normal"


class BotCheckClient:
    """Client for the remote bot-verdict API. Never fabricates: remote
    failure yields indeterminate (None), which suppresses notification."""

    def __init__(self, base_url: str, timeout_s: float = 2.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def check(self, username: str) -> Optional[bool]:
        try:
            resp = requests.get(
                f"{self.base_url}/botcheck", params={"user": username}, timeout=self.timeout_s
            )
            if resp.status_code != 200:
                logger.warning("bot API returned %s for %r", resp.status_code, username)
                return None
            return bool(resp.json()["bot"])
        except (requests.RequestException, ValueError, KeyError) as exc:
            logger.warning("bot API unreachable for %r: %s", username, exc)
            return None


class AbusiveAccountDetector(Detector):
    def __init__(self, version: str, tables: RuleTables, feature_fetch: Callable[[str], Optional[AccountFeatures]]) -> None:
        super().__init__(MechanismKind.ABUSIVE_ACCOUNT, version)
        self._tables = tables
        self._fetch = feature_fetch

    def analyze(self, payload: dict) -> DetectionResult:
        username = payload.get("username") or ""
        features = self._fetch(username)
        if features is None:
            return self._result("normal", {"abusive": 0.0})
        label = classify_account(features, self._tables)
        return self._result(label, {"abusive": 0.0 if label == "normal" else 1.0})


class BotAccountDetector(Detector):
    def __init__(self, version: str, client: BotCheckClient, mechanism: MechanismKind = MechanismKind.BOT_ACCOUNT) -> None:
        super().__init__(mechanism, version)
        self._client = client

    def analyze(self, payload: dict) -> DetectionResult:
        verdict = self._client.check(payload.get("username") or "")
        if verdict is None:
            return self._result("indeterminate", {"bot": 0.0})
        return self._result("bot" if verdict else "human", {"bot": 1.0 if verdict else 0.0})
