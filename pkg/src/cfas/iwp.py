"""In-home worker process: ties the policy store, analysis layer, detectors,
notifier, and intercepting proxy together and exposes the local HTTP API used
by the parental console and the child's avatar overlay."""

from __future__ import annotations

import base64
import http.client
import importlib.resources
import json
import logging
import queue
import threading
from typing import Optional
from urllib.parse import urlsplit

import requests

from . import imageguard
from .dal import DataAccessLayer, DecidedJob, InterceptAction
from .detectors import build_registry
from .detectors.account import AccountFeatures, BotCheckClient
from .detectors.media import VideoApiClient
from .detectors.rules import RuleTables, load_rule_tables
from .events import EventKind, Platform, TrafficEvent
from .httpserver import HttpService, Request, Response, Router
from .ingest import (
    CertificateAuthority,
    HeartbeatMonitor,
    InterceptingProxy,
    Pipeline,
    ProxyConfig,
    UpstreamTarget,
    extract_events,
    extract_outbound,
    parse_document,
)
from .notify import (
    ChannelRegistry,
    FlagClaim,
    FlagDirection,
    FlagReport,
    Notifier,
)
from .policy import (
    DataClass,
    HouseholdMember,
    PolicyError,
    PolicyState,
    PolicyStore,
    Role,
    option_from_json,
    policy_to_json,
)
from .store import NotFoundError

log = logging.getLogger(__name__)


def replacement_image_bytes() -> bytes:
    return importlib.resources.files("cfas.assets").joinpath("replacement.png").read_bytes()


DEFAULT_MEMBERS = [
    HouseholdMember("child-1", Role.CHILD, "Casey", avatar_choice="fox"),
    HouseholdMember("parent-1", Role.CUSTODIAN, "Pat"),
]


class BackendClient:
    """Thin HTTP client for the family back-end used by the IWP."""

    def __init__(self, base_url: str, token: Optional[str] = None, timeout: float = 5.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"} if self.token else {}

    def register(self, household_id: str, enrollment_code: str) -> str:
        resp = requests.post(
            f"{self.base_url}/register",
            json={"household_id": household_id, "enrollment_code": enrollment_code},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        self.token = resp.json()["token"]
        return self.token

    def fetch_bundle(self, current_version: Optional[str]) -> Optional[tuple[bytes, str, str]]:
        """(zip bytes, version, signature), or None when already current."""
        params = {"current": current_version} if current_version else {}
        resp = requests.get(
            f"{self.base_url}/bundles/latest",
            params=params,
            headers=self._headers(),
            timeout=self.timeout,
        )
        if resp.status_code == 304:
            return None
        resp.raise_for_status()
        return resp.content, resp.headers["X-Bundle-Version"], resp.headers["X-Bundle-Sha256"]

    def intake(self, data_class: str, payload: dict, scope: str, consent_proof: dict) -> str:
        resp = requests.post(
            f"{self.base_url}/intake",
            json={
                "data_class": data_class,
                "payload": payload,
                "scope": scope,
                "consent_proof": consent_proof,
            },
            headers=self._headers(),
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["stored"]

    def forward_flag(self, flag_doc: dict) -> str:
        resp = requests.post(
            f"{self.base_url}/flags",
            json=flag_doc,
            headers=self._headers(),
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["stored"]

    def fallback_analyze(self, event_doc: dict) -> dict:
        resp = requests.post(
            f"{self.base_url}/fallback/analyze",
            json=event_doc,
            headers=self._headers(),
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()


class IwpPipeline(Pipeline):
    """Proxy hooks backed by the IWP's analysis layer."""

    def __init__(self, iwp: "Iwp") -> None:
        self.iwp = iwp

    def gate_request(self, flow):
        return self.iwp.gate_outbound(flow)

    def rewrite_response(self, flow):
        return self.iwp.filter_inbound(flow)


class Iwp:
    def __init__(
        self,
        household_id: str = "household-1",
        members: Optional[list[HouseholdMember]] = None,
        backend: Optional[BackendClient] = None,
        bot_api_url: Optional[str] = None,
        video_api_url: Optional[str] = None,
        tables: Optional[RuleTables] = None,
        intercept: Optional[dict[str, UpstreamTarget]] = None,
        blocklist: Optional[frozenset[str]] = None,
        hold_deadline_ms: int = 2000,
        heartbeat_interval_s: float = 10.0,
        heartbeat_clock=None,
        proxy_port: int = 0,
    ) -> None:
        self.household_id = household_id
        self.policy_store = PolicyStore()
        self.policy_store.create_household(household_id, members or list(DEFAULT_MEMBERS))
        self.backend = backend
        self.channels = ChannelRegistry()
        self.notifier = Notifier(
            channels=self.channels,
            forward_flag=self._forward_flag if backend else None,
        )
        self._bot_api_url = bot_api_url
        self._video_api_url = video_api_url
        self._intercept = dict(intercept or {})
        self.tables = tables or load_rule_tables()
        self.bundle_version: Optional[str] = self.tables.version
        self._decisions: dict[str, DecidedJob] = {}
        self._decision_events: dict[str, TrafficEvent] = {}
        self._replace_urls: set[str] = set()
        self._url_for_ref: dict[str, str] = {}
        self._lock = threading.Lock()
        self.dal = self._build_dal(self.tables)
        heartbeat_kwargs = {"clock": heartbeat_clock} if heartbeat_clock else {}
        self.heartbeat = HeartbeatMonitor(
            interval_s=heartbeat_interval_s,
            on_unresponsive=self._heartbeat_down,
            on_recovered=self._heartbeat_up,
            **heartbeat_kwargs,
        )
        self.ca = CertificateAuthority()
        self.proxy = InterceptingProxy(
            ProxyConfig(
                intercept=self._intercept,
                blocklist=blocklist or frozenset(),
                hold_deadline_ms=hold_deadline_ms,
            ),
            pipeline=IwpPipeline(self),
            ca=self.ca,
            port=proxy_port,
        )
        self._replacement_png = replacement_image_bytes()
        self._sync_stop = threading.Event()
        self._sync_thread: Optional[threading.Thread] = None

    # -- construction helpers ------------------------------------------------

    def _build_dal(self, tables: RuleTables) -> DataAccessLayer:
        bot_client = BotCheckClient(self._bot_api_url) if self._bot_api_url else None
        video_client = VideoApiClient(self._video_api_url) if self._video_api_url else None
        dal_holder: dict = {}
        registry = build_registry(
            tables=tables,
            blob_fetch=lambda ref: dal_holder["dal"].get_blob(ref),
            bot_client=bot_client,
            video_client=video_client,
            account_fetch=self._fetch_account_features,
        )
        dal = DataAccessLayer(registry=registry, on_decided=self._on_decided)
        dal_holder["dal"] = dal
        return dal

    def policy(self) -> PolicyState:
        return self.policy_store.snapshot(self.household_id)

    def child_id(self) -> str:
        return self.policy().child().member_id

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> "Iwp":
        self.proxy.start()
        return self

    def stop(self) -> None:
        self.stop_bundle_sync()
        self.proxy.stop()
        self.dal.close()

    # -- bundle sync -------------------------------------------------------------

    def sync_bundle_once(self) -> bool:
        """Pull the latest detector bundle; hot-swap the registry on change.
        Tampered bundles are rejected and the current rules stay live."""
        if self.backend is None:
            return False
        fetched = self.backend.fetch_bundle(self.bundle_version)
        if fetched is None:
            return False
        data, version, signature = fetched
        from .backend.core import verify_and_load_bundle

        try:
            tables = verify_and_load_bundle(data, signature)
        except Exception as exc:
            log.warning("rejected bundle %s: %s", version, exc)
            return False
        self.apply_tables(tables, version)
        return True

    def apply_tables(self, tables: RuleTables, version: str) -> None:
        old = self.dal
        self.tables = tables
        self.bundle_version = version
        self.dal = self._build_dal(tables)
        old.close()

    def start_bundle_sync(self, poll_interval_s: float = 30.0) -> None:
        if self._sync_thread is not None:
            return

        def loop() -> None:
            while not self._sync_stop.wait(poll_interval_s):
                try:
                    self.sync_bundle_once()
                except Exception:
                    log.exception("bundle sync failed")

        self._sync_thread = threading.Thread(target=loop, daemon=True)
        self._sync_thread.start()

    def stop_bundle_sync(self) -> None:
        self._sync_stop.set()
        if self._sync_thread is not None:
            self._sync_thread.join(timeout=1)
            self._sync_thread = None

    # -- external data fetchers ---------------------------------------------

    def _fetch_account_features(self, username: str) -> Optional[AccountFeatures]:
        """Pull profile features from the platform's API via the upstream."""
        for target in self._intercept.values():
            try:
                conn = http.client.HTTPConnection(target.host, target.port, timeout=5)
                conn.request("GET", f"/api/profile/{username}")
                resp = conn.getresponse()
                body = resp.read()
                conn.close()
            except OSError:
                continue
            if resp.status != 200:
                continue
            doc = json.loads(body)
            try:
                return AccountFeatures(
                    username=doc["username"],
                    recent_posts=doc.get("posts", []),
                    followers=doc.get("followers", 0),
                    post_count=doc.get("post_count", len(doc.get("posts", []))),
                )
            except (KeyError, ValueError):
                return None
        return None

    def _fetch_upstream_bytes(self, target: UpstreamTarget, path: str) -> Optional[bytes]:
        try:
            conn = http.client.HTTPConnection(target.host, target.port, timeout=5)
            conn.request("GET", path)
            resp = conn.getresponse()
            body = resp.read()
            conn.close()
        except OSError:
            return None
        return body if resp.status == 200 else None

    # -- pipeline hooks -------------------------------------------------------

    def gate_outbound(self, flow):
        """Analyze an outbound request body; block it when an enforcing
        decision says so. Runs under the proxy's hold deadline."""
        from .ingest.proxy import GateResult

        platform = Platform(flow.platform)
        event = extract_outbound(
            flow.method,
            flow.path,
            flow.request_body,
            platform,
            self.child_id(),
            store_blob=self.dal.put_blob,
        )
        if event is None:
            return None
        decided = self.process_event(event)
        for item in decided:
            if item.decision.action is InterceptAction.BLOCK:
                return GateResult(blocked=True, reason=item.decision.mechanism.value)
        return None

    def filter_inbound(self, flow):
        """Inspect intercepted responses: serve cached image replacements and
        extract inbound events from HTML pages."""
        path = urlsplit(flow.path).path
        with self._lock:
            replace = path in self._replace_urls
        if replace:
            return self._replacement_png, "image/png"
        content_type = flow.response_headers.get("content-type", "")
        if "text/html" not in content_type:
            return None
        target = self._intercept.get(flow.host)
        document = parse_document(flow.response_body.decode("utf-8", "replace"))
        platform = Platform(flow.platform)

        def resolver(src: str) -> Optional[str]:
            if target is None:
                return None
            data = self._fetch_upstream_bytes(target, src)
            if data is None:
                return None
            ref = self.dal.put_blob(data)
            with self._lock:
                self._url_for_ref[ref] = urlsplit(src).path
            return ref

        events = extract_events(document, platform, self.child_id(), blob_resolver=resolver)
        for event in events:
            self.process_event(event)
        return None

    # -- analysis ------------------------------------------------------------

    def process_event(self, event: TrafficEvent) -> list[DecidedJob]:
        return self.dal.process_event(event, self.policy())

    def _on_decided(self, decided: DecidedJob, event: TrafficEvent, policy: PolicyState) -> None:
        with self._lock:
            self._decisions[decided.job.exec_id] = decided
            self._decision_events[decided.job.exec_id] = event
            if (
                decided.decision.action is InterceptAction.REPLACE
                and event.kind is EventKind.FEED_IMAGE
                and event.image_ref is not None
            ):
                url = self._url_for_ref.get(event.image_ref)
                if url is not None:
                    self._replace_urls.add(url)
        for intent in decided.intents:
            try:
                self.notifier.notify(intent, policy)
            except Exception:
                log.exception("notification dispatch failed for %s", decided.job.exec_id)

    # -- heartbeat ------------------------------------------------------------

    def _custodian_ids(self) -> list[str]:
        return [m.member_id for m in self.policy().members if m.role is Role.CUSTODIAN]

    def _heartbeat_down(self, member_id: str) -> None:
        for cid in self._custodian_ids():
            self.notifier.push_raw(
                cid,
                {"type": "heartbeat", "member_id": member_id, "status": "unresponsive"},
            )

    def _heartbeat_up(self, member_id: str) -> None:
        for cid in self._custodian_ids():
            self.notifier.push_raw(
                cid,
                {"type": "heartbeat", "member_id": member_id, "status": "recovered"},
            )

    # -- image protection -------------------------------------------------------

    def protect_image(self, image_bytes: bytes, audience: set[str]):
        """Fail-closed sensitive-image protection; keys live in the back-end
        key service when enrolled, else locally."""
        key_service = self._key_service()
        return imageguard.protect(image_bytes, audience, key_service)

    def _key_service(self):
        if self.backend is not None:
            from .backend.service import RemoteKeyService

            return RemoteKeyService(self.backend.base_url)
        if not hasattr(self, "_local_keys"):
            self._local_keys = imageguard.InMemoryKeyService()
        return self._local_keys

    # -- flags / evidence -------------------------------------------------------

    def _forward_flag(self, report: FlagReport) -> None:
        assert self.backend is not None
        self.backend.forward_flag(report.to_json())

    def evidence_for(self, exec_id: str) -> dict:
        """Evidence portions for one decided job: flagged spans plus one
        message of context on each side."""
        with self._lock:
            decided = self._decisions.get(exec_id)
        if decided is None:
            raise NotFoundError(exec_id)
        job, _ = self.dal.fetch_results(exec_id)
        payload = self.dal.fetch_data(job.data_id)
        portions = []
        messages = payload.get("messages") if isinstance(payload, dict) else None
        for ev in self._result_evidence(exec_id):
            if messages is not None and ev.unit == "message":
                idx = ev.span[0]
                lo, hi = max(0, idx - 1), min(len(messages), idx + 2)
                portions.append(
                    {
                        "snippet": ev.snippet,
                        "context": [m["text"] for m in messages[lo:hi]],
                    }
                )
            else:
                portions.append({"snippet": ev.snippet, "context": []})
        return {
            "exec_id": exec_id,
            "mechanism": decided.job.mechanism.value,
            "portions": portions,
        }

    def _result_evidence(self, exec_id: str):
        _, result = self.dal.fetch_results(exec_id)
        return list(result.evidence) if result is not None else []


# --- local HTTP API --------------------------------------------------------------


def build_iwp_router(iwp: Iwp) -> Router:
    router = Router()

    def get_policy(req: Request) -> Response:
        return Response(200, policy_to_json(iwp.policy()))

    def propose(req: Request) -> Response:
        doc = req.json()
        try:
            change = option_from_json(doc["option"])
            rec = iwp.policy_store.propose_option(iwp.household_id, doc["custodian_id"], change)
        except (PolicyError, KeyError, ValueError) as exc:
            return Response(400, {"error": str(exc)})
        # consent request lands in the child's notification stream
        iwp.notifier.push_raw(
            iwp.child_id(),
            {
                "type": "consent_request",
                "record_id": rec.record_id,
                "option": doc["option"],
                "proposed_by": doc["custodian_id"],
            },
        )
        return Response(200, {"record_id": rec.record_id})

    def consent(req: Request) -> Response:
        doc = req.json()
        try:
            state = iwp.policy_store.decide_consent(
                iwp.household_id,
                doc["member_id"],
                doc["record_id"],
                bool(doc["approve"]),
            )
        except (PolicyError, KeyError) as exc:
            return Response(400, {"error": str(exc)})
        return Response(200, policy_to_json(state))

    def expire(req: Request) -> Response:
        count = iwp.policy_store.expire_consents(iwp.household_id)
        return Response(200, {"expired": count})

    def submit(req: Request) -> Response:
        try:
            event = TrafficEvent.from_json(req.json())
        except (KeyError, ValueError) as exc:
            return Response(400, {"error": str(exc)})
        decided = iwp.process_event(event)
        return Response(
            200,
            {
                "jobs": [
                    {
                        "exec_id": d.job.exec_id,
                        "mechanism": d.job.mechanism.value,
                        "action": d.decision.action.value,
                        "state": d.job.state.value,
                    }
                    for d in decided
                ]
            },
        )

    def job_status(req: Request) -> Response:
        try:
            job, result = iwp.dal.fetch_results(req.params["exec_id"])
        except NotFoundError:
            return Response(404, {"error": "unknown exec id"})
        doc = {
            "exec_id": job.exec_id,
            "data_id": job.data_id,
            "mechanism": job.mechanism.value,
            "state": job.state.value,
        }
        if result is not None:
            doc["result"] = result.to_json()
        return Response(200, doc)

    def stream(req: Request) -> Response:
        member_id = req.query.get("member", "")
        if not member_id:
            return Response(400, {"error": "member query parameter required"})
        channel = iwp.channels.connect(member_id)

        def pump(wfile) -> None:
            try:
                while True:
                    try:
                        message = channel.get(timeout=30)
                    except queue.Empty:
                        wfile.write(b"\n")  # keep-alive blank line
                        wfile.flush()
                        continue
                    wfile.write(json.dumps(message).encode() + b"\n")
                    wfile.flush()
            finally:
                iwp.channels.disconnect(member_id)

        return Response(200, stream=pump, content_type="application/x-ndjson")

    def flag(req: Request) -> Response:
        doc = req.json()
        try:
            report = FlagReport(
                member_id=doc["member_id"],
                target_ref=doc["target_ref"],
                claim=FlagClaim(doc["claim"]),
                direction=FlagDirection(doc["direction"]),
                comment=doc.get("comment"),
                data_class=DataClass(doc.get("data_class", "chat")),
            )
            flag_id = iwp.notifier.submit_flag(report, iwp.policy())
        except (KeyError, ValueError) as exc:
            return Response(400, {"error": str(exc)})
        return Response(200, {"flag_id": flag_id})

    def evidence(req: Request) -> Response:
        try:
            return Response(200, iwp.evidence_for(req.params["exec_id"]))
        except NotFoundError:
            return Response(404, {"error": "unknown exec id"})

    def heartbeat(req: Request) -> Response:
        doc = req.json()
        iwp.heartbeat.beat(doc["member_id"])
        return Response(200, {"ok": True})

    def protect(req: Request) -> Response:
        doc = req.json()
        try:
            protected = iwp.protect_image(
                base64.b64decode(doc["image"]), set(doc["audience"])
            )
        except imageguard.KeyServiceUnavailable:
            return Response(503, {"error": "key service unavailable"})
        except (KeyError, ValueError, imageguard.ImageGuardError) as exc:
            return Response(400, {"error": str(exc)})
        return Response(
            200,
            {
                "image": base64.b64encode(protected.cover_bytes).decode(),
                "image_fp": protected.image_fp,
                "key_ref": protected.key_ref,
            },
        )

    router.add("GET", "/policy", get_policy)
    router.add("POST", "/policy/options", propose)
    router.add("POST", "/policy/consent", consent)
    router.add("POST", "/policy/expire", expire)
    router.add("POST", "/dal/submit", submit)
    router.add("GET", "/dal/jobs/{exec_id}", job_status)
    router.add("GET", "/notify/stream", stream)
    router.add("POST", "/notify/flag", flag)
    router.add("GET", "/notify/evidence/{exec_id}", evidence)
    router.add("POST", "/heartbeat", heartbeat)
    router.add("POST", "/images/protect", protect)
    router.add("GET", "/health", lambda req: Response(200, {"status": "ok", "service": "iwp"}))
    return router


class IwpService:
    """The IWP's local HTTP API (console + avatar clients connect here)."""

    def __init__(self, iwp: Iwp, host: str = "127.0.0.1", port: int = 0) -> None:
        self.iwp = iwp
        self.http = HttpService(build_iwp_router(iwp), host=host, port=port)

    def start(self) -> "IwpService":
        self.iwp.start()
        self.http.start()
        return self

    def stop(self) -> None:
        self.http.stop()
        self.iwp.stop()

    @property
    def base_url(self) -> str:
        return self.http.base_url
