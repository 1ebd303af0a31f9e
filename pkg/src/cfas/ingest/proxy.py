"""TLS-terminating forward proxy.

Traffic to configured intercept hosts is terminated (CONNECT requests get a
locally minted leaf certificate), forwarded to the real upstream, and passed
through an analysis pipeline on the way in and out.  Everything else is
relayed untouched: plain requests byte-for-byte, CONNECT as a blind tunnel.

Outbound gating is bounded by a hold deadline; if the pipeline cannot decide
in time the proxy fails open and forwards the request unchanged.
"""

from __future__ import annotations

import concurrent.futures
import http.client
import logging
import select
import socket
import ssl
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional
from urllib.parse import urlsplit

from .ca import CertificateAuthority

log = logging.getLogger(__name__)

_HOP_BY_HOP = {
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "proxy-connection",
    "te",
    "trailers",
    "transfer-encoding",
    "upgrade",
}

BLOCK_PAGE = (
    b"<html><head><title>Blocked</title></head>"
    b"<body><h1>403 Blocked</h1><p>This site is not available.</p></body></html>"
)

HOLD_PAGE = (
    b"<html><head><title>Held</title></head>"
    b"<body><h1>403 Message held</h1><p>This message was not delivered.</p></body></html>"
)


@dataclass
class UpstreamTarget:
    host: str
    port: int
    platform: str


@dataclass
class Flow:
    """One intercepted request/response exchange."""

    platform: str
    host: str
    method: str
    path: str
    request_headers: dict[str, str]
    request_body: bytes
    status: int = 0
    response_headers: dict[str, str] = field(default_factory=dict)
    response_body: bytes = b""


@dataclass
class GateResult:
    blocked: bool = False
    reason: str = ""


class Pipeline:
    """Hooks invoked by the proxy for intercepted traffic.  The default
    implementation is a no-op; the IWP supplies a real one."""

    def gate_request(self, flow: Flow) -> Optional[GateResult]:
        return None

    def rewrite_response(self, flow: Flow) -> Optional[tuple[bytes, str]]:
        """Return (body, content_type) to substitute, or None to pass."""
        return None

    def observe_response(self, flow: Flow) -> None:
        return None


@dataclass
class ProxyConfig:
    intercept: dict[str, UpstreamTarget] = field(default_factory=dict)
    blocklist: frozenset[str] = frozenset()
    hold_deadline_ms: int = 2000


def _read_headers(rfile) -> Optional[tuple[str, dict[str, str]]]:
    line = rfile.readline(65536)
    if not line:
        return None
    start = line.decode("latin-1").rstrip("\r\n")
    if not start:
        return None
    headers: dict[str, str] = {}
    while True:
        raw = rfile.readline(65536)
        if not raw or raw in (b"\r\n", b"\n"):
            break
        text = raw.decode("latin-1").rstrip("\r\n")
        name, _, value = text.partition(":")
        headers[name.strip().lower()] = value.strip()
    return start, headers


def _read_body(rfile, headers: dict[str, str]) -> bytes:
    if headers.get("transfer-encoding", "").lower() == "chunked":
        chunks = []
        while True:
            size_line = rfile.readline(65536).decode("latin-1").strip()
            size = int(size_line.split(";")[0], 16)
            if size == 0:
                rfile.readline(65536)
                break
            chunks.append(rfile.read(size))
            rfile.readline(65536)
        return b"".join(chunks)
    length = int(headers.get("content-length", "0") or "0")
    return rfile.read(length) if length else b""


def _write_response(
    wfile,
    status: int,
    reason: str,
    headers: dict[str, str],
    body: bytes,
    keep_alive: bool = True,
) -> None:
    out = [f"HTTP/1.1 {status} {reason}".encode("latin-1")]
    sent = set()
    for name, value in headers.items():
        if name.lower() in _HOP_BY_HOP or name.lower() == "content-length":
            continue
        out.append(f"{name}: {value}".encode("latin-1"))
        sent.add(name.lower())
    out.append(b"Content-Length: %d" % len(body))
    out.append(b"Connection: keep-alive" if keep_alive else b"Connection: close")
    out.append(b"")
    out.append(body)
    wfile.write(b"\r\n".join(out))
    wfile.flush()


class InterceptingProxy:
    def __init__(
        self,
        config: ProxyConfig,
        pipeline: Optional[Pipeline] = None,
        ca: Optional[CertificateAuthority] = None,
        host: str = "127.0.0.1",
        port: int = 0,
        audit: Optional[Callable[[dict], None]] = None,
    ) -> None:
        self.config = config
        self.pipeline = pipeline or Pipeline()
        self.ca = ca or CertificateAuthority()
        self._audit = audit or (lambda record: None)
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]
        self._threads: list[threading.Thread] = []
        self._accept_thread: Optional[threading.Thread] = None
        self._gate_pool = concurrent.futures.ThreadPoolExecutor(max_workers=8)
        self._running = False

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._running = True
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def stop(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        self._gate_pool.shutdown(wait=False, cancel_futures=True)

    @property
    def address(self) -> tuple[str, int]:
        return (self.host, self.port)

    def _accept_loop(self) -> None:
        while self._running:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            thread = threading.Thread(target=self._serve_client, args=(conn,), daemon=True)
            thread.start()
            self._threads.append(thread)

    # -- connection handling -----------------------------------------------

    def _serve_client(self, conn: socket.socket) -> None:
        try:
            rfile = conn.makefile("rb")
            parsed = _read_headers(rfile)
            if parsed is None:
                return
            start, headers = parsed
            method, target, _ = start.split(" ", 2)
            if method.upper() == "CONNECT":
                self._handle_connect(conn, rfile, target)
            else:
                body = _read_body(rfile, headers)
                self._handle_plain(conn, method, target, headers, body)
        except Exception:
            log.exception("proxy connection failed")
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def _blocked(self, hostname: str) -> bool:
        return hostname.lower() in self.config.blocklist

    def _handle_connect(self, conn: socket.socket, rfile, target: str) -> None:
        hostname, _, port_text = target.partition(":")
        port = int(port_text or "443")
        if self._blocked(hostname):
            _write_response(conn.makefile("wb"), 403, "Forbidden",
                            {"Content-Type": "text/html"}, BLOCK_PAGE, keep_alive=False)
            self._audit({"event": "blocked", "host": hostname})
            return
        upstream = self.config.intercept.get(hostname)
        conn.sendall(b"HTTP/1.1 200 Connection Established\r\n\r\n")
        if upstream is None:
            self._tunnel(conn, hostname, port)
            return
        ctx = self.ca.server_context(hostname)
        try:
            tls = ctx.wrap_socket(conn, server_side=True)
        except ssl.SSLError:
            log.warning("TLS handshake failed for %s", hostname)
            return
        self._intercept_loop(tls, hostname, upstream)

    def _tunnel(self, client: socket.socket, hostname: str, port: int) -> None:
        try:
            remote = socket.create_connection((hostname, port), timeout=10)
        except OSError:
            return
        sockets = [client, remote]
        try:
            while True:
                readable, _, broken = select.select(sockets, [], sockets, 30)
                if broken or not readable:
                    return
                for side in readable:
                    data = side.recv(65536)
                    if not data:
                        return
                    (remote if side is client else client).sendall(data)
        finally:
            remote.close()

    def _handle_plain(
        self,
        conn: socket.socket,
        method: str,
        target: str,
        headers: dict[str, str],
        body: bytes,
    ) -> None:
        wfile = conn.makefile("wb")
        parts = urlsplit(target)
        hostname = parts.hostname or headers.get("host", "").partition(":")[0]
        port = parts.port or 80
        path = parts.path or "/"
        if parts.query:
            path = f"{path}?{parts.query}"
        if self._blocked(hostname):
            _write_response(wfile, 403, "Forbidden",
                            {"Content-Type": "text/html"}, BLOCK_PAGE, keep_alive=False)
            self._audit({"event": "blocked", "host": hostname})
            return
        upstream = self.config.intercept.get(hostname)
        if upstream is not None:
            self._exchange(wfile, hostname, upstream, method, path, headers, body,
                           keep_alive=False)
            return
        # Transparent passthrough: relay to the real origin untouched.
        try:
            origin = http.client.HTTPConnection(hostname, port, timeout=30)
            fwd = {k: v for k, v in headers.items() if k not in _HOP_BY_HOP}
            origin.request(method, path, body=body or None, headers=fwd)
            resp = origin.getresponse()
            resp_body = resp.read()
            resp_headers = {k: v for k, v in resp.getheaders()}
            origin.close()
        except OSError:
            _write_response(wfile, 502, "Bad Gateway",
                            {"Content-Type": "text/plain"}, b"upstream unreachable",
                            keep_alive=False)
            return
        _write_response(wfile, resp.status, resp.reason, resp_headers, resp_body,
                        keep_alive=False)

    # -- interception ------------------------------------------------------

    def _intercept_loop(self, sock, hostname: str, upstream: UpstreamTarget) -> None:
        rfile = sock.makefile("rb")
        wfile = sock.makefile("wb")
        while True:
            parsed = _read_headers(rfile)
            if parsed is None:
                return
            start, headers = parsed
            method, path, _ = start.split(" ", 2)
            body = _read_body(rfile, headers)
            keep = headers.get("connection", "keep-alive").lower() != "close"
            self._exchange(wfile, hostname, upstream, method, path, headers, body,
                           keep_alive=keep)
            if not keep:
                return

    def _exchange(
        self,
        wfile,
        hostname: str,
        upstream: UpstreamTarget,
        method: str,
        path: str,
        headers: dict[str, str],
        body: bytes,
        keep_alive: bool,
    ) -> None:
        flow = Flow(
            platform=upstream.platform,
            host=hostname,
            method=method.upper(),
            path=path,
            request_headers=dict(headers),
            request_body=body,
        )
        gate = self._gate(flow)
        if gate is not None and gate.blocked:
            self._audit({"event": "held", "host": hostname, "path": path,
                         "reason": gate.reason})
            _write_response(wfile, 403, "Forbidden",
                            {"Content-Type": "text/html"}, HOLD_PAGE, keep_alive)
            return
        try:
            origin = http.client.HTTPConnection(upstream.host, upstream.port, timeout=30)
            fwd = {k: v for k, v in headers.items() if k not in _HOP_BY_HOP}
            fwd["host"] = hostname
            origin.request(method, path, body=body or None, headers=fwd)
            resp = origin.getresponse()
            flow.status = resp.status
            flow.response_body = resp.read()
            flow.response_headers = {k.lower(): v for k, v in resp.getheaders()}
            reason = resp.reason
            origin.close()
        except OSError:
            _write_response(wfile, 502, "Bad Gateway",
                            {"Content-Type": "text/plain"}, b"upstream unreachable",
                            keep_alive)
            return
        replacement = None
        try:
            replacement = self.pipeline.rewrite_response(flow)
        except Exception:
            log.exception("rewrite_response failed; passing original")
        out_headers = dict(flow.response_headers)
        out_body = flow.response_body
        if replacement is not None:
            out_body, content_type = replacement
            out_headers["content-type"] = content_type
            self._audit({"event": "replaced", "host": hostname, "path": path})
        _write_response(wfile, flow.status, reason, out_headers, out_body, keep_alive)
        try:
            self.pipeline.observe_response(flow)
        except Exception:
            log.exception("observe_response failed")

    def _gate(self, flow: Flow) -> Optional[GateResult]:
        """Run the outbound gate with a hard hold deadline; fail open on
        timeout or pipeline error."""
        future = self._gate_pool.submit(self.pipeline.gate_request, flow)
        try:
            return future.result(timeout=self.config.hold_deadline_ms / 1000.0)
        except concurrent.futures.TimeoutError:
            log.warning("gate deadline exceeded for %s %s; failing open",
                        flow.method, flow.path)
            self._audit({"event": "gate_timeout", "path": flow.path})
            return None
        except Exception:
            log.exception("gate_request failed; failing open")
            return None
