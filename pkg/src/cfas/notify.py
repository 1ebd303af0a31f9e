"""Notification module: renders decisions into child-facing avatar
messages and custodian-facing console incidents, scoped by the parental
visibility level, and carries flags/feedback back into the pipeline.

Rendering is a pure function of (intent, policy, names). The child is
always notified; the custodian text reveals the perpetrator's identity
from level 2 up and evidence portions only at level 3.
"""

from __future__ import annotations

import logging
import queue
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Callable, Optional

from .detectors.base import Evidence
from .policy import (
    DataClass,
    Destination,
    Level,
    MechanismKind,
    PolicyState,
    Scope,
    scope_check,
)

logger = logging.getLogger(__name__)

QUEUE_CAPACITY = 1000


def _load_phrases() -> dict[MechanismKind, tuple[str, str]]:
    text = (resources.files("cfas") / "assets" / "mechanism_phrases.tsv").read_text(encoding="utf-8")
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        mechanism, phrase, child_text = line.split("\t")
        out[MechanismKind(mechanism)] = (phrase, child_text)
    return out


MECHANISM_PHRASES = _load_phrases()


class Severity(str, Enum):
    INFO = "info"
    WARNING = "warning"
    CRITICAL = "critical"


@dataclass
class NotificationIntent:
    mechanism: MechanismKind
    child_member_id: str
    household_id: str
    data_class: DataClass
    perpetrator: Optional[str] = None
    evidence_refs: list[Evidence] = field(default_factory=list)
    severity: Severity = Severity.WARNING
    exec_id: Optional[str] = None


class EvidenceAccess(str, Enum):
    NONE = "none"
    NAMES_ONLY = "names_only"
    PORTIONS_LINK = "portions_link"


class Recipient(str, Enum):
    CHILD = "child"
    CUSTODIAN = "custodian"


@dataclass
class RenderedNotification:
    recipient: Recipient
    text: str
    evidence_access: EvidenceAccess = EvidenceAccess.NONE
    evidence_url: Optional[str] = None
    mechanism: Optional[MechanismKind] = None
    exec_id: Optional[str] = None

    def to_json(self) -> dict:
        doc = {
            "recipient": self.recipient.value,
            "text": self.text,
            "evidence_access": self.evidence_access.value,
        }
        if self.evidence_url:
            doc["evidence_url"] = self.evidence_url
        if self.mechanism:
            doc["mechanism"] = self.mechanism.value
        if self.exec_id:
            doc["exec_id"] = self.exec_id
        return doc


def render(intent: NotificationIntent, policy: PolicyState, child_name: str) -> list[RenderedNotification]:
    """Child advisory plus the custodian incident text for the active
    parental visibility level. Pure; exact template strings."""
    phrase, child_template = MECHANISM_PHRASES[intent.mechanism]
    renderings = [
        RenderedNotification(
            recipient=Recipient.CHILD,
            text=child_template.format(name=child_name),
            mechanism=intent.mechanism,
            exec_id=intent.exec_id,
        )
    ]
    level = policy.parental.level
    base = f"{child_name} might be a victim of {phrase}."
    if level is Level.L1 or intent.perpetrator is None:
        text = base
        access = EvidenceAccess.NONE
    else:
        text = f"{child_name} might be a victim of {phrase} by {intent.perpetrator}"
        access = EvidenceAccess.NAMES_ONLY
    evidence_url = None
    if level is Level.L3:
        # level 3 adds the evidence portions; the link text follows the
        # console wording regardless of whether a perpetrator is known
        if intent.perpetrator is None:
            text = f"{base} Click here to see the suspicious chat"
        else:
            text = f"{text}. Click here to see the suspicious chat"
        access = EvidenceAccess.PORTIONS_LINK
        if intent.exec_id:
            evidence_url = f"/notify/evidence/{intent.exec_id}"
    renderings.append(
        RenderedNotification(
            recipient=Recipient.CUSTODIAN,
            text=text,
            evidence_access=access,
            evidence_url=evidence_url,
            mechanism=intent.mechanism,
            exec_id=intent.exec_id,
        )
    )
    return renderings


# --- delivery ----------------------------------------------------------------


@dataclass
class DeliveryReceipt:
    member_id: str
    seq: int
    delivered: bool  # False means queued awaiting reconnect


class ChannelRegistry:
    """Per-member push channels. A connected channel is a queue the HTTP
    stream handler drains; while disconnected, messages buffer in a
    bounded per-member backlog (oldest dropped on overflow)."""

    def __init__(self, capacity: int = QUEUE_CAPACITY) -> None:
        self._capacity = capacity
        self._channels: dict[str, queue.Queue] = {}
        self._backlog: dict[str, deque] = {}
        self._seq: dict[str, int] = {}
        self._lock = threading.Lock()

    def connect(self, member_id: str) -> queue.Queue:
        with self._lock:
            chan: queue.Queue = queue.Queue()
            self._channels[member_id] = chan
            backlog = self._backlog.get(member_id)
            while backlog:
                chan.put(backlog.popleft())
            return chan

    def disconnect(self, member_id: str) -> None:
        with self._lock:
            self._channels.pop(member_id, None)

    def deliver(self, member_id: str, message: dict) -> DeliveryReceipt:
        with self._lock:
            seq = self._seq.get(member_id, 0) + 1
            self._seq[member_id] = seq
            message = {"seq": seq, **message}
            chan = self._channels.get(member_id)
            if chan is not None:
                chan.put(message)
                return DeliveryReceipt(member_id, seq, delivered=True)
            backlog = self._backlog.setdefault(member_id, deque())
            if len(backlog) >= self._capacity:
                dropped = backlog.popleft()
                logger.warning("notification backlog full for %s; dropped seq %s", member_id, dropped.get("seq"))
            backlog.append(message)
            return DeliveryReceipt(member_id, seq, delivered=False)

    def backlog_size(self, member_id: str) -> int:
        with self._lock:
            return len(self._backlog.get(member_id, ()))


# --- flags -------------------------------------------------------------------


class FlagClaim(str, Enum):
    CYBERBULLYING = "cyberbullying"
    GROOMING = "grooming"
    AGGRESSIVE = "aggressive"
    FAKE_IDENTITY = "fake_identity"
    FALSE_INFORMATION = "false_information"
    SENSITIVE_IMAGE = "sensitive_image"


class FlagDirection(str, Enum):
    MISSED_DETECTION = "missed_detection"
    WRONG_DETECTION = "wrong_detection"


@dataclass
class FlagReport:
    member_id: str
    target_ref: str  # event id, data id, or exec id
    claim: FlagClaim
    direction: FlagDirection
    comment: Optional[str] = None
    data_class: DataClass = DataClass.CHAT
    flag_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def to_json(self) -> dict:
        return {
            "flag_id": self.flag_id,
            "member_id": self.member_id,
            "target_ref": self.target_ref,
            "claim": self.claim.value,
            "direction": self.direction.value,
            "comment": self.comment,
            "data_class": self.data_class.value,
        }


class Notifier:
    """Owns rendering + delivery + flag intake for one household's IWP."""

    def __init__(
        self,
        channels: Optional[ChannelRegistry] = None,
        flag_store: Optional[dict] = None,
        forward_flag: Optional[Callable[[FlagReport], None]] = None,
        target_exists: Optional[Callable[[str], bool]] = None,
    ) -> None:
        self.channels = channels or ChannelRegistry()
        self._flags: dict[str, FlagReport] = flag_store if flag_store is not None else {}
        self._forward_flag = forward_flag
        self._target_exists = target_exists
        self._dispatch_lock = threading.Lock()

    def notify(self, intent: NotificationIntent, policy: PolicyState) -> list[DeliveryReceipt]:
        child = policy.child()
        renderings = render(intent, policy, child.display_name)
        custodian_ids = [m.member_id for m in policy.members if m.role.value == "custodian"]
        receipts = []
        with self._dispatch_lock:  # keeps per-recipient order = render order
            for rendered in renderings:
                if rendered.recipient is Recipient.CHILD:
                    receipts.append(self.channels.deliver(child.member_id, rendered.to_json()))
                else:
                    for cid in custodian_ids:
                        receipts.append(self.channels.deliver(cid, rendered.to_json()))
        return receipts

    def push_raw(self, member_id: str, message: dict) -> DeliveryReceipt:
        with self._dispatch_lock:
            return self.channels.deliver(member_id, message)

    def submit_flag(self, report: FlagReport, policy: PolicyState) -> str:
        """Persist a flag; forward to the Back-End intake only when the
        underlying data class is consented for back-end visibility."""
        if self._target_exists is not None and not self._target_exists(report.target_ref):
            raise KeyError(f"unknown flag target {report.target_ref!r}")
        self._flags[report.flag_id] = report
        if self._forward_flag is not None:
            decision = scope_check(policy, report.data_class, Destination.BACKEND)
            if decision is not Scope.DENY:
                self._forward_flag(report)
        return report.flag_id

    def flags(self) -> list[FlagReport]:
        return list(self._flags.values())
