"""Bundled mock social network: a fixture server with stable markup for
chat, wall posts, image upload, feeds, profiles, and video pages.

Stands in for the real platforms so interception and extraction are
testable in CI; the markup matches the selector tables in
`cfas.ingest.extract`.
"""

from __future__ import annotations

import html
import io
import threading
import time
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from ..httpserver import HttpService, Request, Response, Router

OVERLAY_HOOK = '<script src="/overlay.js"></script>'


def _page(title: str, body: str) -> str:
    return (
        "<!DOCTYPE html><html><head><title>"
        + html.escape(title)
        + "</title></head><body>"
        + body
        + OVERLAY_HOOK
        + "</body></html>"
    )


def _demo_image(seed: int, size: int = 64) -> bytes:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return buf.getvalue()


class MockOsn:
    """In-memory OSN state plus the HTTP routes that render it."""

    def __init__(self, fixture_dir: Optional[Path] = None):
        self._lock = threading.Lock()
        self.chats: dict[str, list[dict]] = {}  # peer -> [{direction, sender, text, new}]
        self.posts: list[str] = []
        self.uploads: list[bytes] = []
        self.images: dict[str, bytes] = {
            "feed-1.png": _demo_image(1),
            "feed-2.png": _demo_image(2),
            "feed-3.png": _demo_image(3),
        }
        self.profiles: dict[str, dict] = {
            "alice": {"posts": [{"text": "nice day at the park", "retweet": False}], "followers": 120},
            "eve": {"posts": [{"text": "whatever", "retweet": False}], "followers": 3},
        }
        self.videos: dict[str, dict] = {
            "v123": {"title": "Peppa Pig FUNNY", "tags": ["kids"], "like_count": 10},
        }
        if fixture_dir:
            for path in Path(fixture_dir).glob("*.png"):
                self.images[path.name] = path.read_bytes()

    def add_incoming_chat(self, peer: str, text: str) -> None:
        with self._lock:
            self.chats.setdefault(peer, []).append(
                {"direction": "in", "sender": peer, "text": text, "new": True}
            )

    def router(self) -> Router:
        router = Router()

        def index(req: Request) -> Response:
            return Response(200, _page("mock-osn", '<form method="post" action="/login"><input name="user"/></form>'))

        def login(req: Request) -> Response:
            return Response(200, _page("ok", "<p>logged in</p>"))

        def chat_page(req: Request) -> Response:
            peer = req.query.get("with", "")
            with self._lock:
                messages = [dict(m) for m in self.chats.get(peer, [])]
                for m in self.chats.get(peer, []):
                    m["new"] = False  # rendered as new once; no duplicate capture
            rows = "".join(
                '<div class="chat-message" data-direction="{d}" data-sender="{s}" data-new="{n}">{t}</div>'.format(
                    d=m["direction"], s=html.escape(m["sender"]), n="true" if m.get("new") else "false",
                    t=html.escape(m["text"]),
                )
                for m in messages
            )
            return Response(200, _page(f"chat with {peer}", rows or "<p>no messages</p>"))

        def chat_send(req: Request) -> Response:
            from urllib.parse import parse_qs

            form = {k: v[0] for k, v in parse_qs(req.body.decode()).items()}
            peer, text = form.get("to", ""), form.get("text", "")
            with self._lock:
                self.chats.setdefault(peer, []).append(
                    {"direction": "out", "sender": "me", "text": text, "new": False}
                )
            return Response(200, {"ok": True})

        def wall(req: Request) -> Response:
            with self._lock:
                rows = "".join(f'<div class="wall-post">{html.escape(p)}</div>' for p in self.posts)
            return Response(200, _page("wall", rows or "<p>empty wall</p>"))

        def post(req: Request) -> Response:
            from urllib.parse import parse_qs

            form = {k: v[0] for k, v in parse_qs(req.body.decode()).items()}
            with self._lock:
                self.posts.append(form.get("text", ""))
            return Response(200, {"ok": True})

        def upload(req: Request) -> Response:
            with self._lock:
                self.uploads.append(req.body)
            return Response(200, {"ok": True, "size": len(req.body)})

        def feed(req: Request) -> Response:
            with self._lock:
                names = sorted(self.images)
            imgs = "".join(f'<img class="feed-image" src="/img/{n}"/>' for n in names)
            return Response(200, _page("feed", imgs))

        def image(req: Request) -> Response:
            with self._lock:
                blob = self.images.get(req.params["name"])
            if blob is None:
                return Response(404, {"error": "no such image"})
            return Response(200, blob, content_type="image/png")

        def profile(req: Request) -> Response:
            username = req.params["username"]
            body = f'<h1 class="profile-username">@{html.escape(username)}</h1>'
            return Response(200, _page(f"profile {username}", body))

        def profile_api(req: Request) -> Response:
            with self._lock:
                data = self.profiles.get(req.params["username"])
            if data is None:
                return Response(404, {"error": "no such user"})
            return Response(200, {"username": req.params["username"], **data})

        def watch(req: Request) -> Response:
            vid = req.query.get("v", "")
            body = f'<meta name="video-id" content="{html.escape(vid)}"/><h1>video {html.escape(vid)}</h1>'
            return Response(200, _page(f"watch {vid}", body))

        def overlay_js(req: Request) -> Response:
            return Response(200, "/* CFAS overlay include hook */", content_type="application/javascript")

        router.add("GET", "/", index)
        router.add("POST", "/login", login)
        router.add("GET", "/chat", chat_page)
        router.add("POST", "/chat", chat_send)
        router.add("GET", "/wall", wall)
        router.add("POST", "/post", post)
        router.add("POST", "/upload", upload)
        router.add("GET", "/feed", feed)
        router.add("GET", "/img/{name}", image)
        router.add("GET", "/profile/{username}", profile)
        router.add("GET", "/api/profile/{username}", profile_api)
        router.add("GET", "/watch", watch)
        router.add("GET", "/overlay.js", overlay_js)
        router.add("GET", "/health", lambda req: Response(200, {"status": "ok", "service": "mock-osn"}))
        return router


class MockOsnService:
    def __init__(self, fixture_dir: Optional[Path] = None, host: str = "127.0.0.1", port: int = 0):
        self.osn = MockOsn(fixture_dir)
        self.http = HttpService(self.osn.router(), host, port)

    def start(self) -> "MockOsnService":
        self.http.start()
        return self

    def stop(self) -> None:
        self.http.stop()

    @property
    def base_url(self) -> str:
        return self.http.base_url
