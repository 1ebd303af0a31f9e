"""Data Access Layer: the decision mechanism and storage workflow that
every detector run goes through.

Each captured event fans out to one analysis job per enabled, applicable
mechanism. A job gets a fresh ExecID, its payload is stored under a
DataID, the detector fetches the data by id, the result is persisted with
the (ExecID, DataID) pair, and the decision step turns the result into an
intercept action plus notification intents. Every state change lands in
the audit log.
"""

from __future__ import annotations

import itertools
import logging
import secrets
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .detectors import DetectorRegistry, DetectionResult, ERROR_LABEL, WINDOW_SIZE, error_result
from .events import EventKind, TrafficEvent
from .notify import NotificationIntent, Severity
from .policy import CybersafetyConfig, DataClass, Level, MechanismKind, PolicyState
from .store import AuditLog, DocumentStore, NotFoundError

logger = logging.getLogger(__name__)

RETRY_BACKOFF_S = (0.1, 0.4, 1.6)
DETECTOR_TIMEOUT_S = 5.0

# which mechanisms apply to which captured event kinds
MECHANISMS_BY_KIND: dict[EventKind, tuple[MechanismKind, ...]] = {
    EventKind.CHAT_OUT: (
        MechanismKind.GROOMING,
        MechanismKind.CYBERBULLYING,
        MechanismKind.DISTRESS,
        MechanismKind.PII_EXPOSURE,
    ),
    EventKind.CHAT_IN: (MechanismKind.GROOMING, MechanismKind.CYBERBULLYING),
    EventKind.POST_COMPOSE: (MechanismKind.PII_EXPOSURE,),
    EventKind.IMAGE_UPLOAD: (MechanismKind.SENSITIVE_IMAGE, MechanismKind.HATEFUL_MEME),
    EventKind.FEED_IMAGE: (MechanismKind.HATEFUL_MEME,),
    EventKind.PROFILE_VISIT: (
        MechanismKind.ABUSIVE_ACCOUNT,
        MechanismKind.BOT_ACCOUNT,
        MechanismKind.FAKE_ACTIVITY,
    ),
    EventKind.VIDEO_VISIT: (MechanismKind.DISTURBING_VIDEO,),
}

POSITIVE_LABELS = {
    "grooming",
    "cyberbullying",
    "distress",
    "pii_found",
    "hateful",
    "inappropriate",
    "sensitive",
    "bot",
    "spam",
    "bully",
    "aggressive",
}


class JobState(str, Enum):
    CREATED = "created"
    STORED = "stored"
    DISPATCHED = "dispatched"
    ANALYZED = "analyzed"
    DECIDED = "decided"


_STATE_ORDER = [JobState.CREATED, JobState.STORED, JobState.DISPATCHED, JobState.ANALYZED, JobState.DECIDED]


@dataclass
class AnalysisJob:
    exec_id: str
    mechanism: MechanismKind
    event_id: str
    detector_version: str = ""
    data_id: Optional[str] = None
    state: JobState = JobState.CREATED
    result: Optional[DetectionResult] = None

    def advance(self, state: JobState) -> None:
        if _STATE_ORDER.index(state) < _STATE_ORDER.index(self.state):
            raise ValueError(f"job state may not regress {self.state.value} -> {state.value}")
        self.state = state


class InterceptAction(str, Enum):
    PASS = "pass"
    HOLD = "hold_for_analysis"
    REPLACE = "replace"
    BLOCK = "block"


@dataclass
class InterceptDecision:
    action: InterceptAction
    mechanism: Optional[MechanismKind] = None
    replacement: Optional[bytes] = None
    reason: str = ""


# what an enforced mechanism does to the exchange carrying its content;
# account-level mechanisms only ever notify
ENFORCE_ACTIONS: dict[MechanismKind, InterceptAction] = {
    MechanismKind.HATEFUL_MEME: InterceptAction.REPLACE,
    MechanismKind.CYBERBULLYING: InterceptAction.REPLACE,
    MechanismKind.SENSITIVE_IMAGE: InterceptAction.REPLACE,
    MechanismKind.GROOMING: InterceptAction.BLOCK,
    MechanismKind.PII_EXPOSURE: InterceptAction.BLOCK,
    MechanismKind.DISTURBING_VIDEO: InterceptAction.BLOCK,
    MechanismKind.DISTRESS: InterceptAction.PASS,
    MechanismKind.FAKE_ACTIVITY: InterceptAction.PASS,
    MechanismKind.ABUSIVE_ACCOUNT: InterceptAction.PASS,
    MechanismKind.BOT_ACCOUNT: InterceptAction.PASS,
}


class ExecIdGenerator:
    """Monotonic counter plus a random 64-bit suffix: debuggable ordering,
    negligible collision probability."""

    def __init__(self) -> None:
        self._counter = itertools.count(1)

    def new(self) -> str:
        return f"{next(self._counter):08d}-{secrets.token_hex(8)}"


def decide(
    job: AnalysisJob,
    result: DetectionResult,
    policy: PolicyState,
    thresholds: Optional[dict[str, float]] = None,
    child_member_id: str = "",
    perpetrator: Optional[str] = None,
    data_class=None,
) -> tuple[InterceptDecision, list[NotificationIntent]]:
    """Pure decision function: (result, thresholds, cybersafety) -> action
    plus notification intents. A result triggers when any of its class
    scores strictly exceeds the mechanism's threshold."""
    thresholds = thresholds or {}
    threshold = thresholds.get(job.mechanism.value, thresholds.get("default", 0.5))
    if result.label == ERROR_LABEL:
        return InterceptDecision(InterceptAction.PASS, job.mechanism, reason="detector error"), []
    class_scores = {k: v for k, v in result.scores.items() if k != "skin_ratio"}
    triggered = result.label in POSITIVE_LABELS and any(v > threshold for v in class_scores.values())
    if not triggered:
        return InterceptDecision(InterceptAction.PASS, job.mechanism), []
    intent = NotificationIntent(
        mechanism=job.mechanism,
        child_member_id=child_member_id,
        household_id=policy.household_id,
        data_class=data_class if data_class is not None else DataClass.CHAT,
        perpetrator=perpetrator,
        evidence_refs=list(result.evidence),
        severity=Severity.WARNING,
        exec_id=job.exec_id,
    )
    cs = policy.cybersafety
    if cs.level is Level.L2 and job.mechanism in cs.enforce_mechanisms:
        action = ENFORCE_ACTIONS.get(job.mechanism, InterceptAction.PASS)
    else:
        action = InterceptAction.PASS
    return InterceptDecision(action, job.mechanism, reason=result.label), [intent]


class ConversationTracker:
    """Sliding per-conversation window of the last W messages, both sides."""

    def __init__(self, window: int = WINDOW_SIZE) -> None:
        self._windows: dict[tuple[str, str], deque] = {}
        self._window = window
        self._lock = threading.Lock()

    def add(self, member_id: str, peer: str, direction: str, text: str) -> list[dict]:
        key = (member_id, peer or "")
        with self._lock:
            window = self._windows.setdefault(key, deque(maxlen=self._window))
            window.append({"direction": direction, "text": text})
            return list(window)


@dataclass
class DecidedJob:
    job: AnalysisJob
    decision: InterceptDecision
    intents: list[NotificationIntent]


class DataAccessLayer:
    """One DAL instance per deployment (IWP or Back-End)."""

    def __init__(
        self,
        registry: DetectorRegistry,
        store: Optional[DocumentStore] = None,
        audit: Optional[AuditLog] = None,
        thresholds: Optional[dict[str, float]] = None,
        workers: int = 4,
        detector_timeout_s: float = DETECTOR_TIMEOUT_S,
        on_decided: Optional[Callable[[DecidedJob, TrafficEvent, PolicyState], None]] = None,
    ) -> None:
        self.registry = registry
        self.store = store or DocumentStore()
        self.blobs = DocumentStore()
        self.audit = audit or AuditLog()
        self.thresholds = dict(thresholds or {"distress": 0.65, "default": 0.5})
        self._exec_ids = ExecIdGenerator()
        self._jobs: dict[str, AnalysisJob] = {}
        self._jobs_lock = threading.Lock()
        self._seen_events: set[str] = set()
        self._conversations = ConversationTracker()
        # separate pools: fan-out workers block on detector futures, so the
        # detectors need their own pool or the fan-out path can deadlock
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="dal")
        self._detector_pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="detector")
        self._timeout_s = detector_timeout_s
        self._on_decided = on_decided

    # --- storage -------------------------------------------------------

    def store_data(self, payload) -> str:
        return self.store.store(payload)

    def fetch_data(self, data_id: str):
        return self.store.fetch(data_id)

    def put_blob(self, data: bytes) -> str:
        from .events import content_address

        ref = content_address(data)
        self.blobs.put(ref, data)
        return ref

    def get_blob(self, ref: str) -> Optional[bytes]:
        return self.blobs.get(ref)

    # --- job lifecycle ---------------------------------------------------

    def _job_payload(self, event: TrafficEvent, mechanism: MechanismKind) -> dict:
        if mechanism in (MechanismKind.GROOMING, MechanismKind.CYBERBULLYING, MechanismKind.DISTRESS):
            direction = "out" if event.kind is EventKind.CHAT_OUT else "in"
            if event.kind in (EventKind.CHAT_IN, EventKind.CHAT_OUT):
                window = self._conversations.add(event.member_id, event.peer or "", direction, event.text or "")
            else:
                window = [{"direction": direction, "text": event.text or ""}]
            return {"messages": window}
        return event.payload()

    def submit(self, event: TrafficEvent, policy: PolicyState) -> list[AnalysisJob]:
        """Fan an event out to one job per enabled applicable mechanism and
        start them. Duplicate event ids are rejected."""
        with self._jobs_lock:
            if event.event_id in self._seen_events:
                raise ValueError(f"duplicate event {event.event_id!r}")
            self._seen_events.add(event.event_id)
        enabled = policy.cybersafety.enabled_mechanisms
        jobs = []
        for mechanism in MECHANISMS_BY_KIND.get(event.kind, ()):
            if mechanism not in enabled or not self.registry.has(mechanism):
                continue
            job = AnalysisJob(
                exec_id=self._exec_ids.new(),
                mechanism=mechanism,
                event_id=event.event_id,
                detector_version=self.registry.get(mechanism).version,
            )
            self._audit(job)
            payload = self._job_payload(event, mechanism)
            job.data_id = self._store_with_retry(payload)
            job.advance(JobState.STORED)
            self._audit(job)
            with self._jobs_lock:
                self._jobs[job.exec_id] = job
            jobs.append(job)
        return jobs

    def _store_with_retry(self, payload) -> str:
        last_exc: Optional[Exception] = None
        for attempt, backoff in enumerate((0.0,) + RETRY_BACKOFF_S):
            if backoff:
                time.sleep(backoff)
            try:
                return self.store_data(payload)
            except Exception as exc:  # store unavailable; retry with same job
                last_exc = exc
                logger.warning("store attempt %d failed: %s", attempt + 1, exc)
        raise last_exc  # type: ignore[misc]

    def dispatch(self, job: AnalysisJob) -> DetectionResult:
        """Run the detector for a stored job: fetch by DataID, analyze,
        persist the result keyed by (ExecID, DataID)."""
        if job.state is not JobState.STORED:
            raise ValueError(f"dispatch requires a stored job, got {job.state.value}")
        job.advance(JobState.DISPATCHED)
        self._audit(job)
        detector = self.registry.get(job.mechanism)
        payload = self.fetch_data(job.data_id)
        future = self._detector_pool.submit(detector.analyze, payload)
        try:
            result = future.result(timeout=self._timeout_s)
        except FutureTimeout:
            logger.warning("detector %s timed out on job %s", job.mechanism.value, job.exec_id)
            result = error_result(detector.version, "timeout")
        except Exception as exc:
            logger.warning("detector %s crashed on job %s: %s", job.mechanism.value, job.exec_id, exc)
            result = error_result(detector.version, "crash")
        self.store.put(f"result:{job.exec_id}", {"data_id": job.data_id, "result": result.to_json()})
        job.result = result
        job.advance(JobState.ANALYZED)
        self._audit(job)
        return result

    def run_job(
        self,
        job: AnalysisJob,
        event: TrafficEvent,
        policy: PolicyState,
    ) -> DecidedJob:
        result = self.dispatch(job)
        decision, intents = decide(
            job,
            result,
            policy,
            thresholds=self.thresholds,
            child_member_id=event.member_id,
            perpetrator=event.peer or event.username,
            data_class=event.data_class,
        )
        job.advance(JobState.DECIDED)
        self._audit(job, decision=decision.action.value)
        decided = DecidedJob(job, decision, intents)
        if self._on_decided is not None:
            self._on_decided(decided, event, policy)
        return decided

    def process_event(self, event: TrafficEvent, policy: PolicyState) -> list[DecidedJob]:
        """Submit + run every applicable job for an event; jobs for one
        event fan out concurrently."""
        jobs = self.submit(event, policy)
        if not jobs:
            return []
        futures = [self._pool.submit(self.run_job, job, event, policy) for job in jobs]
        return [f.result(timeout=self._timeout_s * 4) for f in futures]

    def fetch_results(self, exec_id: str) -> tuple[AnalysisJob, Optional[DetectionResult]]:
        with self._jobs_lock:
            job = self._jobs.get(exec_id)
        if job is None:
            raise NotFoundError(exec_id)
        return job, job.result

    def jobs(self) -> list[AnalysisJob]:
        with self._jobs_lock:
            return list(self._jobs.values())

    def purge(self) -> None:
        """Drop every stored payload, blob, job, and result (the Back-End
        fallback path deletes synchronously after each analysis)."""
        for key in self.store.keys():
            self.store.delete(key)
        for key in self.blobs.keys():
            self.blobs.delete(key)
        with self._jobs_lock:
            self._jobs.clear()

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
        self._detector_pool.shutdown(wait=False, cancel_futures=True)

    def _audit(self, job: AnalysisJob, **extra) -> None:
        self.audit.append(
            exec_id=job.exec_id,
            data_id=job.data_id,
            mechanism=job.mechanism.value,
            state=job.state.value,
            **extra,
        )
