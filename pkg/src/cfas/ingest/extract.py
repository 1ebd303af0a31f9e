"""Markup and request-body extraction: turns intercepted page/API traffic
into normalized TrafficEvents.

Extraction is data-driven (selector tables per platform) so real platform
adapters can be added without touching the pipeline. Unknown markup yields
an empty list, never a crash.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Callable, Optional
from urllib.parse import parse_qs, urlparse

from ..events import Direction, EventKind, Platform, TrafficEvent

logger = logging.getLogger(__name__)


# --- minimal element tree -----------------------------------------------------


@dataclass
class Element:
    tag: str
    attrs: dict[str, str] = field(default_factory=dict)
    text: str = ""
    children: list["Element"] = field(default_factory=list)

    def classes(self) -> set[str]:
        return set((self.attrs.get("class") or "").split())

    def find_all(self, tag: Optional[str] = None, cls: Optional[str] = None) -> list["Element"]:
        found = []
        for child in self.children:
            if (tag is None or child.tag == tag) and (cls is None or cls in child.classes()):
                found.append(child)
            found.extend(child.find_all(tag, cls))
        return found

    def all_text(self) -> str:
        parts = [self.text]
        parts.extend(c.all_text() for c in self.children)
        return "".join(parts)


class _TreeBuilder(HTMLParser):
    VOID = {"img", "br", "meta", "link", "input", "hr", "source"}

    def __init__(self) -> None:
        super().__init__()
        self.root = Element("document")
        self._stack = [self.root]

    def handle_starttag(self, tag, attrs):
        element = Element(tag, {k: (v or "") for k, v in attrs})
        self._stack[-1].children.append(element)
        if tag not in self.VOID:
            self._stack.append(element)

    def handle_endtag(self, tag):
        for i in range(len(self._stack) - 1, 0, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                break

    def handle_data(self, data):
        self._stack[-1].text += data


def parse_document(html: str) -> Element:
    builder = _TreeBuilder()
    try:
        builder.feed(html)
        builder.close()
    except Exception as exc:  # malformed page: salvage what was parsed
        logger.warning("document parse error: %s", exc)
    return builder.root


# --- selector tables -----------------------------------------------------------

# what to look for on a rendered page, per platform
SELECTOR_TABLES: dict[Platform, dict[str, dict]] = {
    Platform.FACEBOOK_LIKE: {
        "chat_in": {"tag": "div", "cls": "chat-message", "direction_attr": "data-direction", "new_attr": "data-new"},
        "feed_image": {"tag": "img", "cls": "feed-image", "src_attr": "src"},
    },
    Platform.TWITTER_LIKE: {
        "profile": {"tag": "h1", "cls": "profile-username"},
    },
    Platform.YOUTUBE_LIKE: {
        "video": {"tag": "meta", "name": "video-id", "content_attr": "content"},
    },
}


def extract_events(
    document: Element,
    platform: Platform,
    member_id: str,
    blob_resolver: Optional[Callable[[str], Optional[str]]] = None,
    peer: Optional[str] = None,
) -> list[TrafficEvent]:
    """Extract TrafficEvents from a parsed response document.

    `blob_resolver` maps an image src URL to a stored content address; feed
    images without resolvable bytes are skipped with a diagnostic.
    """
    events: list[TrafficEvent] = []
    table = SELECTOR_TABLES.get(platform, {})
    try:
        chat_rule = table.get("chat_in")
        if chat_rule:
            for el in document.find_all(chat_rule["tag"], chat_rule["cls"]):
                if el.attrs.get(chat_rule["direction_attr"]) != "in":
                    continue
                if el.attrs.get(chat_rule["new_attr"]) != "true":
                    continue  # only unseen inbound messages become events
                events.append(
                    TrafficEvent(
                        member_id=member_id,
                        platform=platform,
                        kind=EventKind.CHAT_IN,
                        direction=Direction.INBOUND,
                        text=el.all_text().strip(),
                        peer=el.attrs.get("data-sender") or peer,
                    )
                )
        feed_rule = table.get("feed_image")
        if feed_rule:
            for el in document.find_all(feed_rule["tag"], feed_rule["cls"]):
                src = el.attrs.get(feed_rule["src_attr"], "")
                ref = blob_resolver(src) if blob_resolver else None
                if ref is None:
                    logger.warning("feed image %r not resolvable; skipped", src)
                    continue
                events.append(
                    TrafficEvent(
                        member_id=member_id,
                        platform=platform,
                        kind=EventKind.FEED_IMAGE,
                        direction=Direction.INBOUND,
                        image_ref=ref,
                    )
                )
        profile_rule = table.get("profile")
        if profile_rule:
            for el in document.find_all(profile_rule["tag"], profile_rule["cls"]):
                username = el.all_text().strip().lstrip("@")
                if username:
                    events.append(
                        TrafficEvent(
                            member_id=member_id,
                            platform=platform,
                            kind=EventKind.PROFILE_VISIT,
                            direction=Direction.INBOUND,
                            username=username,
                        )
                    )
        video_rule = table.get("video")
        if video_rule:
            for el in document.find_all(video_rule["tag"]):
                if el.attrs.get("name") == video_rule["name"] and el.attrs.get(video_rule["content_attr"]):
                    events.append(
                        TrafficEvent(
                            member_id=member_id,
                            platform=platform,
                            kind=EventKind.VIDEO_VISIT,
                            direction=Direction.INBOUND,
                            video_id=el.attrs[video_rule["content_attr"]],
                        )
                    )
    except Exception as exc:  # total: extraction failures surface as fewer events
        logger.warning("extraction failed: %s", exc)
    return events


# --- outbound request-body extraction ------------------------------------------

# intercepted endpoints whose request bodies carry outbound user content
OUTBOUND_ENDPOINTS = {
    "/chat": EventKind.CHAT_OUT,
    "/post": EventKind.POST_COMPOSE,
    "/upload": EventKind.IMAGE_UPLOAD,
}


def extract_outbound(
    method: str,
    path: str,
    body: bytes,
    platform: Platform,
    member_id: str,
    store_blob: Optional[Callable[[bytes], str]] = None,
) -> Optional[TrafficEvent]:
    """One event for an intercepted outbound request, or None."""
    if method != "POST":
        return None
    kind = OUTBOUND_ENDPOINTS.get(urlparse(path).path)
    if kind is None:
        return None
    try:
        if kind is EventKind.IMAGE_UPLOAD:
            ref = store_blob(body) if store_blob else None
            if ref is None:
                return None
            return TrafficEvent(
                member_id=member_id,
                platform=platform,
                kind=kind,
                direction=Direction.OUTBOUND,
                image_ref=ref,
            )
        form = {k: v[0] for k, v in parse_qs(body.decode(errors="replace")).items()}
        text = form.get("text", "")
        return TrafficEvent(
            member_id=member_id,
            platform=platform,
            kind=kind,
            direction=Direction.OUTBOUND,
            text=text,
            peer=form.get("to"),
        )
    except Exception as exc:
        logger.warning("outbound extraction failed on %s: %s", path, exc)
        return None
