"""Tiny routing layer over the stdlib HTTP server.

All CFAS services (Back-End, IWP local API, mock OSN, mock external APIs)
are plain threaded HTTP/1.1 servers; this keeps them dependency-free and
easy to run several of in one test process.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import parse_qs, urlparse

Handler = Callable[["Request"], "Response"]


class Request:
    def __init__(self, method: str, path: str, query: dict, headers, body: bytes, params: dict):
        self.method = method
        self.path = path
        self.query = query
        self.headers = headers
        self.body = body
        self.params = params  # named capture groups from the route pattern

    def json(self) -> dict:
        return json.loads(self.body.decode() or "{}")

    def bearer_token(self) -> Optional[str]:
        auth = self.headers.get("Authorization", "")
        return auth.removeprefix("Bearer ").strip() or None


class Response:
    def __init__(
        self,
        status: int = 200,
        body: bytes | str | dict | list | None = None,
        content_type: Optional[str] = None,
        headers: Optional[dict] = None,
        stream: Optional[Callable] = None,
    ):
        self.status = status
        self.headers = dict(headers or {})
        self.stream = stream  # callable(write) for long-lived push streams
        if isinstance(body, (dict, list)):
            self.body = json.dumps(body).encode()
            content_type = content_type or "application/json"
        elif isinstance(body, str):
            self.body = body.encode()
            content_type = content_type or "text/html; charset=utf-8"
        else:
            self.body = body or b""
            content_type = content_type or "application/octet-stream"
        self.content_type = content_type


class _ChunkedWriter:
    """Frames stream writes as HTTP/1.1 chunks so clients see each push
    message as soon as it is flushed instead of blocking on a fixed-size
    read of an unframed body."""

    def __init__(self, wfile) -> None:
        self._wfile = wfile

    def write(self, data: bytes) -> None:
        if data:
            self._wfile.write(f"{len(data):X}\r\n".encode() + data + b"\r\n")

    def flush(self) -> None:
        self._wfile.flush()

    def close(self) -> None:
        self._wfile.write(b"0\r\n\r\n")
        self._wfile.flush()


class Router:
    def __init__(self) -> None:
        self._routes: list[tuple[str, re.Pattern, Handler]] = []

    def add(self, method: str, pattern: str, handler: Handler) -> None:
        # `{name}` in patterns becomes a named capture group
        regex = re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", pattern)
        self._routes.append((method.upper(), re.compile(f"^{regex}$"), handler))

    def dispatch(self, request: Request) -> Response:
        for method, regex, handler in self._routes:
            if method != request.method:
                continue
            match = regex.match(request.path)
            if match:
                request.params = match.groupdict()
                return handler(request)
        return Response(404, {"error": "not found"})


class HttpService:
    """A threaded HTTP server bound to a Router; start()/stop() lifecycle."""

    def __init__(self, router: Router, host: str = "127.0.0.1", port: int = 0, quiet: bool = True):
        self.router = router
        outer = self

        class _Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # noqa: N802
                if not quiet:
                    super().log_message(fmt, *args)

            def _handle(self):
                parsed = urlparse(self.path)
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length) if length else b""
                query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
                request = Request(self.command, parsed.path, query, self.headers, body, {})
                try:
                    response = outer.router.dispatch(request)
                except Exception as exc:  # noqa: BLE001 - service boundary
                    response = Response(500, {"error": str(exc)})
                if response.stream is not None:
                    self.send_response(response.status)
                    self.send_header("Content-Type", response.content_type)
                    self.send_header("Cache-Control", "no-cache")
                    self.send_header("Transfer-Encoding", "chunked")
                    self.end_headers()
                    writer = _ChunkedWriter(self.wfile)
                    try:
                        response.stream(writer)
                        writer.close()
                    except (BrokenPipeError, ConnectionResetError):
                        pass
                    self.close_connection = True
                    return
                self.send_response(response.status)
                self.send_header("Content-Type", response.content_type)
                self.send_header("Content-Length", str(len(response.body)))
                for key, value in response.headers.items():
                    self.send_header(key, value)
                self.end_headers()
                if self.command != "HEAD":
                    self.wfile.write(response.body)

            do_GET = do_POST = do_PUT = do_DELETE = do_HEAD = _handle

        self._server = ThreadingHTTPServer((host, port), _Handler)
        self._server.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "HttpService":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
