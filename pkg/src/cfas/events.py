"""Normalized units of captured social-network activity.

Every capture path (proxy extraction, add-on fallback submission, test
fixtures) produces TrafficEvents; everything downstream consumes them.
"""

from __future__ import annotations

import hashlib
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Optional

from .policy import DataClass, utcnow


class Platform(str, Enum):
    FACEBOOK_LIKE = "facebook_like"
    TWITTER_LIKE = "twitter_like"
    YOUTUBE_LIKE = "youtube_like"


class EventKind(str, Enum):
    CHAT_IN = "chat_in"
    CHAT_OUT = "chat_out"
    POST_COMPOSE = "post_compose"
    IMAGE_UPLOAD = "image_upload"
    FEED_IMAGE = "feed_image"
    PROFILE_VISIT = "profile_visit"
    VIDEO_VISIT = "video_visit"


OUTBOUND_KINDS = frozenset({EventKind.CHAT_OUT, EventKind.POST_COMPOSE, EventKind.IMAGE_UPLOAD})

TEXT_KINDS = frozenset({EventKind.CHAT_IN, EventKind.CHAT_OUT, EventKind.POST_COMPOSE})
IMAGE_KINDS = frozenset({EventKind.IMAGE_UPLOAD, EventKind.FEED_IMAGE})

# which visibility data class an event belongs to, per destination scope checks
EVENT_DATA_CLASS = {
    EventKind.CHAT_IN: DataClass.CHAT,
    EventKind.CHAT_OUT: DataClass.CHAT,
    EventKind.POST_COMPOSE: DataClass.FB_WALL,
    EventKind.IMAGE_UPLOAD: DataClass.FB_PHOTOS,
    EventKind.FEED_IMAGE: DataClass.FB_PHOTOS,
    EventKind.PROFILE_VISIT: DataClass.TWITTER_PROFILES,
    EventKind.VIDEO_VISIT: DataClass.YOUTUBE_VIDEOS,
}


class Direction(str, Enum):
    INBOUND = "inbound"
    OUTBOUND = "outbound"


def content_address(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class TrafficEvent:
    member_id: str
    platform: Platform
    kind: EventKind
    direction: Direction
    event_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    captured_at: datetime = field(default_factory=utcnow)
    text: Optional[str] = None
    image_ref: Optional[str] = None  # content address of stored image bytes
    username: Optional[str] = None
    video_id: Optional[str] = None
    peer: Optional[str] = None  # chat counterpart, when known

    def __post_init__(self) -> None:
        if self.kind in TEXT_KINDS and self.text is None:
            raise ValueError(f"{self.kind.value} event needs text")
        if self.kind in IMAGE_KINDS and self.image_ref is None:
            raise ValueError(f"{self.kind.value} event needs an image_ref")
        if self.kind is EventKind.PROFILE_VISIT and self.username is None:
            raise ValueError("profile_visit event needs a username")
        if self.kind is EventKind.VIDEO_VISIT and self.video_id is None:
            raise ValueError("video_visit event needs a video_id")
        expected = Direction.OUTBOUND if self.kind in OUTBOUND_KINDS else Direction.INBOUND
        if self.direction is not expected:
            raise ValueError(f"{self.kind.value} events are {expected.value}")

    @property
    def data_class(self) -> DataClass:
        return EVENT_DATA_CLASS[self.kind]

    def payload(self) -> dict:
        out = {"kind": self.kind.value}
        for key in ("text", "image_ref", "username", "video_id", "peer"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    def to_json(self) -> dict:
        return {
            "event_id": self.event_id,
            "member_id": self.member_id,
            "platform": self.platform.value,
            "kind": self.kind.value,
            "direction": self.direction.value,
            "captured_at": self.captured_at.isoformat(),
            **{k: v for k, v in self.payload().items() if k != "kind"},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrafficEvent":
        return cls(
            event_id=doc.get("event_id") or str(uuid.uuid4()),
            member_id=doc["member_id"],
            platform=Platform(doc["platform"]),
            kind=EventKind(doc["kind"]),
            direction=Direction(doc["direction"]),
            captured_at=datetime.fromisoformat(doc["captured_at"]) if doc.get("captured_at") else utcnow(),
            text=doc.get("text"),
            image_ref=doc.get("image_ref"),
            username=doc.get("username"),
            video_id=doc.get("video_id"),
            peer=doc.get("peer"),
        )
