"""Image and video mechanisms: the RGB skin-pixel rule, perceptual-hash
matching of known hateful memes, and keyword rules over video metadata.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import requests
from PIL import Image, UnidentifiedImageError

from ..policy import MechanismKind
from .base import Detector, DetectionResult
from .rules import RuleTables

logger = logging.getLogger(__name__)


# --- skin detection --------------------------------------------------------


def skin_ratio(image: Image.Image) -> float:
    """Fraction of pixels classified as skin by the RGB heuristic:
    R>95, G>40, B>20, max-min channel spread >15, |R-G|>15, R>G, R>B."""
    rgb = np.asarray(image.convert("RGB"), dtype=np.int16)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    spread = rgb.max(axis=-1) - rgb.min(axis=-1)
    mask = (
        (r > 95)
        & (g > 40)
        & (b > 20)
        & (spread > 15)
        & (np.abs(r - g) > 15)
        & (r > g)
        & (r > b)
    )
    return float(mask.mean())


def detect_skin(image_bytes: bytes) -> float:
    image = Image.open(io.BytesIO(image_bytes))  # raises on undecodable input
    return skin_ratio(image)


# --- hateful-meme perceptual hashing ---------------------------------------


def perceptual_hash(image: Image.Image) -> int:
    """64-bit average hash: 8x8 grayscale thumbnail thresholded at its mean."""
    gray = np.asarray(image.convert("L").resize((8, 8), Image.LANCZOS), dtype=np.float64)
    bits = (gray > gray.mean()).flatten()
    value = 0
    for bit in bits:
        value = (value << 1) | int(bit)
    return value


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def classify_meme(image_bytes: bytes, tables: RuleTables) -> str:
    """hateful iff the image's perceptual hash is within the configured
    Hamming distance of any blocklisted hash; undecodable images pass."""
    try:
        image = Image.open(io.BytesIO(image_bytes))
        image.load()
    except (UnidentifiedImageError, OSError) as exc:
        logger.warning("undecodable image treated as benign: %s", exc)
        return "benign"
    max_distance = int(tables.knob("meme_hash_distance", 8))
    phash = perceptual_hash(image)
    for blocked in tables.meme_blocklist:
        if hamming(phash, blocked) <= max_distance:
            return "hateful"
    return "benign"


# --- video metadata rules ---------------------------------------------------


@dataclass
class VideoFeatures:
    video_id: str
    title: Optional[str] = None
    tags: list[str] = field(default_factory=list)
    thumbnail_ref: Optional[str] = None
    upload_date: Optional[str] = None
    like_count: Optional[int] = None


def classify_video(features: Optional[VideoFeatures], tables: RuleTables) -> str:
    """inappropriate iff child-bait terms co-occur with violent or sexual
    terms across the title and tags; missing features pass."""
    if features is None:
        logger.warning("video features missing; treating as appropriate")
        return "appropriate"
    text = " ".join([features.title or ""] + list(features.tags)).lower()
    classes = {cls for term, cls in tables.video_terms.items() if term in text}
    if "childbait" in classes and ({"violent", "sexual"} & classes):
        return "inappropriate"
    return "appropriate"


class VideoApiClient:
    """Fetches VideoFeatures from the (mock) video metadata API. Absent
    fields stay absent; nothing is fabricated."""

    def __init__(self, base_url: str, timeout_s: float = 2.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def fetch(self, video_id: str) -> Optional[VideoFeatures]:
        try:
            resp = requests.get(f"{self.base_url}/video/{video_id}", timeout=self.timeout_s)
            if resp.status_code != 200:
                return None
            doc = resp.json()
            return VideoFeatures(
                video_id=video_id,
                title=doc.get("title"),
                tags=list(doc.get("tags", [])),
                thumbnail_ref=doc.get("thumbnail_ref"),
                upload_date=doc.get("upload_date"),
                like_count=doc.get("like_count"),
            )
        except (requests.RequestException, ValueError) as exc:
            logger.warning("video API unreachable for %r: %s", video_id, exc)
            return None


# --- detector wrappers ------------------------------------------------------


class SensitiveImageDetector(Detector):
    def __init__(self, version: str, tables: RuleTables, blob_fetch: Callable[[str], Optional[bytes]]) -> None:
        super().__init__(MechanismKind.SENSITIVE_IMAGE, version)
        self._tables = tables
        self._blob_fetch = blob_fetch

    def analyze(self, payload: dict) -> DetectionResult:
        blob = self._blob_fetch(payload.get("image_ref") or "")
        if blob is None:
            return self._result("none", {"sensitive": 0.0})
        try:
            ratio = detect_skin(blob)
        except (UnidentifiedImageError, OSError):
            return self._result("error", {})
        tau = self._tables.knob("skin_ratio", 0.30)
        sensitive = ratio > tau
        return self._result(
            "sensitive" if sensitive else "none",
            {"sensitive": 1.0 if sensitive else 0.0, "skin_ratio": min(1.0, ratio)},
        )


class HatefulMemeDetector(Detector):
    def __init__(self, version: str, tables: RuleTables, blob_fetch: Callable[[str], Optional[bytes]]) -> None:
        super().__init__(MechanismKind.HATEFUL_MEME, version)
        self._tables = tables
        self._blob_fetch = blob_fetch

    def analyze(self, payload: dict) -> DetectionResult:
        blob = self._blob_fetch(payload.get("image_ref") or "")
        if blob is None:
            return self._result("benign", {"hateful": 0.0})
        label = classify_meme(blob, self._tables)
        return self._result(label, {"hateful": 1.0 if label == "hateful" else 0.0})


class DisturbingVideoDetector(Detector):
    def __init__(self, version: str, tables: RuleTables, client: VideoApiClient) -> None:
        super().__init__(MechanismKind.DISTURBING_VIDEO, version)
        self._tables = tables
        self._client = client

    def analyze(self, payload: dict) -> DetectionResult:
        features = self._client.fetch(payload.get("video_id") or "")
        label = classify_video(features, self._tables)
        return self._result(label, {"inappropriate": 1.0 if label == "inappropriate" else 0.0})
