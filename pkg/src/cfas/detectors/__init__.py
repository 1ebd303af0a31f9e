"""Pluggable detector registry: rule/lexicon baselines for every detection
mechanism, behind one interface so trained models can replace them."""

from __future__ import annotations

from typing import Callable, Optional

from ..policy import MechanismKind
from .account import AbusiveAccountDetector, AccountFeatures, BotAccountDetector, BotCheckClient, classify_account
from .base import Detector, DetectionResult, DetectorRegistry, ERROR_LABEL, Evidence, error_result
from .media import (
    DisturbingVideoDetector,
    HatefulMemeDetector,
    SensitiveImageDetector,
    VideoApiClient,
    VideoFeatures,
    classify_meme,
    classify_video,
    detect_skin,
    perceptual_hash,
)
from .pii import PiiDetector, PiiFinding, detect_pii, luhn_valid
from .rules import DEFAULT_VERSION, RuleTables, dump_rule_tables, load_rule_tables
from .text import (
    CyberbullyingDetector,
    DistressDetector,
    GroomingDetector,
    WINDOW_SIZE,
    detect_cyberbullying,
    detect_distress,
    detect_grooming,
)

__all__ = [
    "AccountFeatures",
    "BotCheckClient",
    "Detector",
    "DetectionResult",
    "DetectorRegistry",
    "ERROR_LABEL",
    "Evidence",
    "PiiFinding",
    "RuleTables",
    "VideoApiClient",
    "VideoFeatures",
    "WINDOW_SIZE",
    "build_registry",
    "classify_account",
    "classify_meme",
    "classify_video",
    "detect_cyberbullying",
    "detect_distress",
    "detect_grooming",
    "detect_pii",
    "detect_skin",
    "dump_rule_tables",
    "error_result",
    "load_rule_tables",
    "luhn_valid",
    "perceptual_hash",
]


def build_registry(
    tables: Optional[RuleTables] = None,
    blob_fetch: Optional[Callable[[str], Optional[bytes]]] = None,
    bot_client: Optional[BotCheckClient] = None,
    video_client: Optional[VideoApiClient] = None,
    account_fetch: Optional[Callable[[str], Optional[AccountFeatures]]] = None,
) -> DetectorRegistry:
    """Wire the full baseline detector set from one set of rule tables.

    Detectors whose external dependency (blob store, mock API client) is
    not supplied are simply not registered; the DAL only creates jobs for
    registered mechanisms.
    """
    tables = tables or load_rule_tables()
    version = tables.version
    registry = DetectorRegistry()
    registry.register(PiiDetector(version))
    registry.register(DistressDetector(version, tables))
    registry.register(GroomingDetector(version, tables))
    registry.register(CyberbullyingDetector(version, tables))
    if blob_fetch is not None:
        registry.register(SensitiveImageDetector(version, tables, blob_fetch))
        registry.register(HatefulMemeDetector(version, tables, blob_fetch))
    if bot_client is not None:
        registry.register(BotAccountDetector(version, bot_client))
        # fake-activity has no dedicated mechanism in the implementation
        # write-up beyond bot detection; it shares the bot verdict.
        registry.register(BotAccountDetector(version, bot_client, mechanism=MechanismKind.FAKE_ACTIVITY))
    if video_client is not None:
        registry.register(DisturbingVideoDetector(version, tables, video_client))
    if account_fetch is not None:
        registry.register(AbusiveAccountDetector(version, tables, account_fetch))
    return registry
