"""Household policy engine: visibility levels, cybersafety levels, and the
consent handshake that gates every option change.

Nothing in the suite may reveal or act on a child's traffic unless the
active policy allows it, and no option becomes active without the child's
approval recorded here. Approved options expire after a fixed six-month
span (183 days, UTC) and revert to the most restrictive defaults.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Optional

SIX_MONTHS = timedelta(days=183)

POLICY_SCHEMA = "policy.v1"


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


class PolicyError(Exception):
    """Rejected policy operation (bad caller, bad option, bad state)."""


class Role(str, Enum):
    CHILD = "child"
    CUSTODIAN = "custodian"


class Level(str, Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"


class MechanismKind(str, Enum):
    GROOMING = "grooming"
    CYBERBULLYING = "cyberbullying"
    DISTRESS = "distress"
    FAKE_ACTIVITY = "fake_activity"
    PII_EXPOSURE = "pii_exposure"
    HATEFUL_MEME = "hateful_meme"
    DISTURBING_VIDEO = "disturbing_video"
    SENSITIVE_IMAGE = "sensitive_image"
    ABUSIVE_ACCOUNT = "abusive_account"
    BOT_ACCOUNT = "bot_account"


class DataClass(str, Enum):
    """Classes of captured activity that visibility levels gate."""

    CHAT = "chat"
    TWITTER_PROFILES = "twitter_profiles"
    YOUTUBE_VIDEOS = "youtube_videos"
    FB_WALL = "fb_wall"
    FB_PHOTOS = "fb_photos"
    FB_FRIENDS = "fb_friends"
    # back-end specific classes
    CHILD_WALL = "child_wall"
    FRIENDS_WALL = "friends_wall"
    FRIENDS_PROFILES = "friends_profiles"


PARENTAL_L2_CLASSES = frozenset(
    {
        DataClass.TWITTER_PROFILES,
        DataClass.YOUTUBE_VIDEOS,
        DataClass.FB_WALL,
        DataClass.FB_PHOTOS,
        DataClass.FB_FRIENDS,
    }
)

BACKEND_L2_CLASSES = frozenset(
    {DataClass.CHILD_WALL, DataClass.FRIENDS_WALL, DataClass.FRIENDS_PROFILES}
)


class Destination(str, Enum):
    CUSTODIAN = "custodian"
    BACKEND = "backend"


class Scope(str, Enum):
    ALLOW = "allow"
    ALLOW_ANONYMIZED = "allow_anonymized"
    DENY = "deny"


class ConsentState(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    REJECTED = "rejected"
    EXPIRED = "expired"


@dataclass(frozen=True)
class HouseholdMember:
    member_id: str
    role: Role
    display_name: str
    avatar_choice: Optional[str] = None  # children only


@dataclass(frozen=True)
class ParentalVisibility:
    level: Level = Level.L1
    l2_selections: frozenset[DataClass] = frozenset()
    set_at: Optional[datetime] = None
    expires_at: Optional[datetime] = None


@dataclass(frozen=True)
class BackendVisibility:
    level: Level = Level.L1
    l2_selections: frozenset[DataClass] = frozenset()
    anonymize: bool = True
    set_at: Optional[datetime] = None
    expires_at: Optional[datetime] = None


ALL_MECHANISMS = frozenset(MechanismKind)


@dataclass(frozen=True)
class CybersafetyConfig:
    level: Level = Level.L1
    enabled_mechanisms: frozenset[MechanismKind] = ALL_MECHANISMS
    enforce_mechanisms: frozenset[MechanismKind] = frozenset()
    set_at: Optional[datetime] = None
    expires_at: Optional[datetime] = None


class OptionKind(str, Enum):
    PARENTAL = "parental"
    BACKEND = "backend"
    CYBERSAFETY = "cybersafety"


@dataclass(frozen=True)
class OptionChange:
    """A proposed new value for one of the three console option groups."""

    kind: OptionKind
    parental: Optional[ParentalVisibility] = None
    backend: Optional[BackendVisibility] = None
    cybersafety: Optional[CybersafetyConfig] = None

    def validate(self) -> None:
        target = {
            OptionKind.PARENTAL: self.parental,
            OptionKind.BACKEND: self.backend,
            OptionKind.CYBERSAFETY: self.cybersafety,
        }[self.kind]
        if target is None:
            raise PolicyError(f"option change of kind {self.kind.value} carries no value")
        if self.kind is OptionKind.PARENTAL:
            assert self.parental is not None
            if self.parental.level is Level.L1 and self.parental.l2_selections:
                raise PolicyError("parental L1 must carry an empty selection set")
            if not self.parental.l2_selections <= PARENTAL_L2_CLASSES:
                raise PolicyError("parental selections outside the L2 class set")
        elif self.kind is OptionKind.BACKEND:
            assert self.backend is not None
            if not self.backend.l2_selections <= BACKEND_L2_CLASSES:
                raise PolicyError("back-end selections outside the L2 class set")
        else:
            assert self.cybersafety is not None
            cs = self.cybersafety
            if cs.level is Level.L3:
                raise PolicyError("cybersafety has only two levels")
            if cs.level is Level.L2 and not cs.enforce_mechanisms:
                raise PolicyError("cybersafety L2 needs at least one enforced mechanism")
            if not cs.enforce_mechanisms <= cs.enabled_mechanisms:
                raise PolicyError("enforced mechanisms must be enabled")


@dataclass
class ConsentRecord:
    record_id: str
    option: OptionChange
    proposed_by: str
    state: ConsentState = ConsentState.PENDING
    proposed_at: Optional[datetime] = None
    decided_at: Optional[datetime] = None
    expires_at: Optional[datetime] = None


@dataclass
class PolicyState:
    household_id: str
    members: list[HouseholdMember] = field(default_factory=list)
    parental: ParentalVisibility = field(default_factory=ParentalVisibility)
    backend: BackendVisibility = field(default_factory=BackendVisibility)
    cybersafety: CybersafetyConfig = field(default_factory=CybersafetyConfig)
    consents: list[ConsentRecord] = field(default_factory=list)
    version: int = 0

    def member(self, member_id: str) -> HouseholdMember:
        for m in self.members:
            if m.member_id == member_id:
                return m
        raise PolicyError(f"unknown member {member_id!r}")

    def child(self) -> HouseholdMember:
        for m in self.members:
            if m.role is Role.CHILD:
                return m
        raise PolicyError("household has no child member")

    def consent(self, record_id: str) -> ConsentRecord:
        for rec in self.consents:
            if rec.record_id == record_id:
                return rec
        raise PolicyError(f"unknown consent record {record_id!r}")


def scope_check(
    policy: PolicyState,
    data_class: DataClass,
    destination: Destination,
    now: Optional[datetime] = None,
) -> Scope:
    """Decide whether one class of captured data may be shown to the
    custodian or shipped to the Back-End under the current policy.

    Total and deterministic: every (policy, class, destination) pair maps to
    exactly one answer, and anything whose consent has lapsed is denied.
    """
    now = now or utcnow()
    if destination is Destination.CUSTODIAN:
        vis = policy.parental
        if vis.expires_at is not None and vis.expires_at <= now:
            return Scope.DENY
        if vis.level is Level.L1:
            return Scope.DENY
        if vis.level is Level.L2:
            return Scope.ALLOW if data_class in vis.l2_selections else Scope.DENY
        # L3: everything L2 covers, plus chat
        if data_class in PARENTAL_L2_CLASSES or data_class is DataClass.CHAT:
            return Scope.ALLOW
        return Scope.DENY
    bvis = policy.backend
    if bvis.expires_at is not None and bvis.expires_at <= now:
        return Scope.DENY
    if bvis.level is Level.L1:
        return Scope.DENY
    if bvis.level is Level.L2:
        allowed = data_class in bvis.l2_selections
    else:  # L3: all of L2's classes plus chats
        allowed = data_class in BACKEND_L2_CLASSES or data_class is DataClass.CHAT
    if not allowed:
        return Scope.DENY
    return Scope.ALLOW_ANONYMIZED if bvis.anonymize else Scope.ALLOW


class PolicyStore:
    """Authoritative per-household policy documents with the consent
    handshake: custodians propose, the child decides, options expire.

    Mutations are serialized per household; reads hand out snapshots that
    are safe to share across pipeline workers.
    """

    def __init__(self) -> None:
        self._households: dict[str, PolicyState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def create_household(self, household_id: str, members: list[HouseholdMember]) -> PolicyState:
        if not any(m.role is Role.CHILD for m in members):
            raise PolicyError("household needs at least one child")
        if not any(m.role is Role.CUSTODIAN for m in members):
            raise PolicyError("household needs at least one custodian")
        if len({m.member_id for m in members}) != len(members):
            raise PolicyError("duplicate member ids")
        with self._guard:
            if household_id in self._households:
                raise PolicyError(f"household {household_id!r} exists")
            self._households[household_id] = PolicyState(household_id, list(members))
            self._locks[household_id] = threading.Lock()
        return self.snapshot(household_id)

    def _lock(self, household_id: str) -> threading.Lock:
        with self._guard:
            try:
                return self._locks[household_id]
            except KeyError:
                raise PolicyError(f"unknown household {household_id!r}") from None

    def snapshot(self, household_id: str) -> PolicyState:
        with self._lock(household_id):
            return _copy_state(self._households[household_id])

    def propose_option(
        self,
        household_id: str,
        custodian_id: str,
        change: OptionChange,
        now: Optional[datetime] = None,
    ) -> ConsentRecord:
        """Record a custodian's proposed option change as a pending consent.

        The option does not take effect; a consent-request notification is
        the caller's job (the IWP wires this to the child's add-on).
        """
        now = now or utcnow()
        change.validate()
        with self._lock(household_id):
            state = self._households[household_id]
            proposer = state.member(custodian_id)
            if proposer.role is not Role.CUSTODIAN:
                raise PolicyError(f"{custodian_id!r} is not a custodian")
            rec = ConsentRecord(
                record_id=uuid.uuid4().hex,
                option=change,
                proposed_by=custodian_id,
                proposed_at=now,
                expires_at=now + SIX_MONTHS,
            )
            state.consents.append(rec)
            state.version += 1
            return replace_consent(rec)

    def decide_consent(
        self,
        household_id: str,
        child_id: str,
        record_id: str,
        approve: bool,
        now: Optional[datetime] = None,
    ) -> PolicyState:
        now = now or utcnow()
        with self._lock(household_id):
            state = self._households[household_id]
            decider = state.member(child_id)
            if decider.role is not Role.CHILD:
                raise PolicyError(f"{child_id!r} is not the child")
            rec = state.consent(record_id)
            if rec.state is not ConsentState.PENDING:
                raise PolicyError(f"consent record is {rec.state.value}, not pending")
            if rec.expires_at is not None and rec.expires_at <= now:
                rec.state = ConsentState.EXPIRED
                raise PolicyError("consent request expired before decision")
            rec.decided_at = now
            if not approve:
                rec.state = ConsentState.REJECTED
                state.version += 1
                return _copy_state(state)
            rec.state = ConsentState.APPROVED
            rec.expires_at = now + SIX_MONTHS
            _apply_option(state, rec.option, now, rec.expires_at)
            state.version += 1
            return _copy_state(state)

    def expire_consents(self, household_id: str, now: Optional[datetime] = None) -> int:
        """Flip approved-but-lapsed consents to expired and revert the
        affected options to their level-1 defaults. Idempotent for a fixed
        ``now``. Returns the number of records expired."""
        now = now or utcnow()
        with self._lock(household_id):
            state = self._households[household_id]
            expired = 0
            for rec in state.consents:
                if rec.state is ConsentState.APPROVED and rec.expires_at is not None and rec.expires_at <= now:
                    rec.state = ConsentState.EXPIRED
                    _revert_option(state, rec.option.kind)
                    expired += 1
            if expired:
                state.version += 1
            return expired


def _apply_option(state: PolicyState, change: OptionChange, now: datetime, expiry: datetime) -> None:
    if change.kind is OptionKind.PARENTAL:
        assert change.parental is not None
        state.parental = replace(change.parental, set_at=now, expires_at=expiry)
    elif change.kind is OptionKind.BACKEND:
        assert change.backend is not None
        state.backend = replace(change.backend, set_at=now, expires_at=expiry)
    else:
        assert change.cybersafety is not None
        state.cybersafety = replace(change.cybersafety, set_at=now, expires_at=expiry)


def _revert_option(state: PolicyState, kind: OptionKind) -> None:
    # expiry reverts to the most restrictive default for the option group
    if kind is OptionKind.PARENTAL:
        state.parental = ParentalVisibility()
    elif kind is OptionKind.BACKEND:
        state.backend = BackendVisibility()
    else:
        state.cybersafety = CybersafetyConfig()


def _copy_state(state: PolicyState) -> PolicyState:
    return PolicyState(
        household_id=state.household_id,
        members=list(state.members),
        parental=state.parental,
        backend=state.backend,
        cybersafety=state.cybersafety,
        consents=[replace_consent(r) for r in state.consents],
        version=state.version,
    )


def replace_consent(rec: ConsentRecord) -> ConsentRecord:
    return ConsentRecord(
        record_id=rec.record_id,
        option=rec.option,
        proposed_by=rec.proposed_by,
        state=rec.state,
        proposed_at=rec.proposed_at,
        decided_at=rec.decided_at,
        expires_at=rec.expires_at,
    )


# --- policy.v1 JSON wire format -------------------------------------------


def _dt(value: Optional[datetime]) -> Optional[str]:
    return value.isoformat() if value else None


def _parse_dt(value: Optional[str]) -> Optional[datetime]:
    return datetime.fromisoformat(value) if value else None


def policy_to_json(state: PolicyState) -> dict:
    return {
        "schema": POLICY_SCHEMA,
        "household_id": state.household_id,
        "version": state.version,
        "members": [
            {
                "member_id": m.member_id,
                "role": m.role.value,
                "display_name": m.display_name,
                "avatar_choice": m.avatar_choice,
            }
            for m in state.members
        ],
        "parental": {
            "level": state.parental.level.value,
            "l2_selections": sorted(c.value for c in state.parental.l2_selections),
            "set_at": _dt(state.parental.set_at),
            "expires_at": _dt(state.parental.expires_at),
        },
        "backend": {
            "level": state.backend.level.value,
            "l2_selections": sorted(c.value for c in state.backend.l2_selections),
            "anonymize": state.backend.anonymize,
            "set_at": _dt(state.backend.set_at),
            "expires_at": _dt(state.backend.expires_at),
        },
        "cybersafety": {
            "level": state.cybersafety.level.value,
            "enabled_mechanisms": sorted(m.value for m in state.cybersafety.enabled_mechanisms),
            "enforce_mechanisms": sorted(m.value for m in state.cybersafety.enforce_mechanisms),
            "set_at": _dt(state.cybersafety.set_at),
            "expires_at": _dt(state.cybersafety.expires_at),
        },
        "consents": [
            {
                "record_id": r.record_id,
                "option_kind": r.option.kind.value,
                "option": option_to_json(r.option),
                "proposed_by": r.proposed_by,
                "state": r.state.value,
                "proposed_at": _dt(r.proposed_at),
                "decided_at": _dt(r.decided_at),
                "expires_at": _dt(r.expires_at),
            }
            for r in state.consents
        ],
    }


def option_to_json(change: OptionChange) -> dict:
    out: dict = {"kind": change.kind.value}
    if change.parental is not None:
        out["parental"] = {
            "level": change.parental.level.value,
            "l2_selections": sorted(c.value for c in change.parental.l2_selections),
        }
    if change.backend is not None:
        out["backend"] = {
            "level": change.backend.level.value,
            "l2_selections": sorted(c.value for c in change.backend.l2_selections),
            "anonymize": change.backend.anonymize,
        }
    if change.cybersafety is not None:
        out["cybersafety"] = {
            "level": change.cybersafety.level.value,
            "enabled_mechanisms": sorted(m.value for m in change.cybersafety.enabled_mechanisms),
            "enforce_mechanisms": sorted(m.value for m in change.cybersafety.enforce_mechanisms),
        }
    return out


def option_from_json(doc: dict) -> OptionChange:
    kind = OptionKind(doc["kind"])
    parental = backend = cybersafety = None
    if "parental" in doc:
        p = doc["parental"]
        parental = ParentalVisibility(
            level=Level(p["level"]),
            l2_selections=frozenset(DataClass(c) for c in p.get("l2_selections", [])),
        )
    if "backend" in doc:
        b = doc["backend"]
        backend = BackendVisibility(
            level=Level(b["level"]),
            l2_selections=frozenset(DataClass(c) for c in b.get("l2_selections", [])),
            anonymize=bool(b.get("anonymize", True)),
        )
    if "cybersafety" in doc:
        c = doc["cybersafety"]
        cybersafety = CybersafetyConfig(
            level=Level(c["level"]),
            enabled_mechanisms=frozenset(MechanismKind(m) for m in c.get("enabled_mechanisms", [])),
            enforce_mechanisms=frozenset(MechanismKind(m) for m in c.get("enforce_mechanisms", [])),
        )
    return OptionChange(kind=kind, parental=parental, backend=backend, cybersafety=cybersafety)


def policy_to_json_str(state: PolicyState) -> str:
    return json.dumps(policy_to_json(state), sort_keys=True)
