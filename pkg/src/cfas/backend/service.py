"""HTTP surface of the Back-End: registration, bundle sync, consent-gated
intake, fallback analysis, flag intake, and the steganography key service.
"""

from __future__ import annotations

import base64
import logging

from ..httpserver import HttpService, Request, Response, Router
from ..policy import DataClass, Scope
from .core import Backend, BackendError, ConsentMissing, IntakeRecord, NotRegistered

logger = logging.getLogger(__name__)


def build_router(backend: Backend) -> Router:
    router = Router()

    def guard(handler):
        def wrapped(req: Request) -> Response:
            try:
                return handler(req)
            except NotRegistered as exc:
                return Response(401, {"error": str(exc)})
            except ConsentMissing as exc:
                return Response(403, {"error": str(exc)})
            except BackendError as exc:
                return Response(400, {"error": str(exc)})

        return wrapped

    @guard
    def register(req: Request) -> Response:
        doc = req.json()
        reg = backend.register_iwp(doc["household_id"], doc["enrollment_code"])
        return Response(200, {"iwp_id": reg.iwp_id, "token": reg.token})

    @guard
    def bundles_latest(req: Request) -> Response:
        bundle = backend.sync_bundles(req.bearer_token(), req.query.get("current"))
        if bundle is None:
            return Response(304, b"")
        return Response(
            200,
            bundle.data,
            content_type="application/zip",
            headers={"X-Bundle-Version": bundle.bundle_version, "X-Bundle-Sha256": bundle.signature},
        )

    @guard
    def intake(req: Request) -> Response:
        doc = req.json()
        record = IntakeRecord(
            data_class=DataClass(doc["data_class"]),
            payload=doc["payload"],
            consent_proof=doc.get("consent_proof") or {},
        )
        record_id = backend.intake(req.bearer_token(), record, Scope(doc["scope"]))
        return Response(200, {"stored": record_id})

    @guard
    def fallback(req: Request) -> Response:
        return Response(200, backend.fallback_analyze(req.bearer_token(), req.json()))

    @guard
    def store_flag(req: Request) -> Response:
        return Response(200, {"stored": backend.store_flag(req.bearer_token(), req.json())})

    @guard
    def delete_household(req: Request) -> Response:
        backend.authenticate(req.bearer_token())
        return Response(200, {"deleted": backend.delete_household_data(req.params["household_id"])})

    @guard
    def register_key(req: Request) -> Response:
        doc = req.json()
        key_ref = backend.keys.register(
            doc["image_fp"], set(doc["audience"]), base64.b64decode(doc["key"])
        )
        return Response(200, {"key_ref": key_ref})

    @guard
    def lookup_key(req: Request) -> Response:
        key = backend.keys.lookup(req.params["image_fp"], req.query.get("viewer", ""))
        if key is None:
            return Response(403, {"error": "not authorized"})
        return Response(200, {"key": base64.b64encode(key).decode()})

    router.add("POST", "/register", register)
    router.add("GET", "/bundles/latest", bundles_latest)
    router.add("POST", "/intake", intake)
    router.add("POST", "/fallback/analyze", fallback)
    router.add("POST", "/flags", store_flag)
    router.add("POST", "/households/{household_id}/delete", delete_household)
    router.add("POST", "/keys", register_key)
    router.add("GET", "/keys/{image_fp}", lookup_key)
    router.add("GET", "/health", lambda req: Response(200, {"status": "ok", "service": "backend"}))
    return router


class BackendService:
    def __init__(self, backend: Backend | None = None, host: str = "127.0.0.1", port: int = 0):
        self.backend = backend or Backend()
        self.http = HttpService(build_router(self.backend), host, port)

    def start(self) -> "BackendService":
        self.http.start()
        return self

    def stop(self) -> None:
        self.http.stop()

    @property
    def base_url(self) -> str:
        return self.http.base_url


class RemoteKeyService:
    """imageguard KeyService backed by the Back-End's HTTP key routes."""

    def __init__(self, base_url: str, timeout_s: float = 3.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def register(self, image_fp: str, audience: set[str], key: bytes) -> str:
        import requests

        resp = requests.post(
            f"{self.base_url}/keys",
            json={"image_fp": image_fp, "audience": sorted(audience), "key": base64.b64encode(key).decode()},
            timeout=self.timeout_s,
        )
        resp.raise_for_status()
        return resp.json()["key_ref"]

    def lookup(self, image_fp: str, viewer_id: str):
        import requests

        resp = requests.get(
            f"{self.base_url}/keys/{image_fp}", params={"viewer": viewer_id}, timeout=self.timeout_s
        )
        if resp.status_code != 200:
            return None
        return base64.b64decode(resp.json()["key"])
