"""Back-End analytics stack: detector-bundle distribution to registered
proxies, consent-gated (optionally anonymized) data intake, the fallback
analysis path with synchronous deletion, and lexicon aggregation from
user flags.

Nothing is stored without a consent proof, and fallback submissions are
wiped before the response leaves the process.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import re
import secrets
import threading
import zipfile
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..dal import DataAccessLayer, DecidedJob
from ..detectors import DetectorRegistry, RuleTables, build_registry, detect_pii, load_rule_tables
from ..detectors.rules import RULE_FILES, dump_rule_tables
from ..detectors.text import tokenize
from ..events import TrafficEvent
from ..imageguard import InMemoryKeyService
from ..notify import FlagDirection, FlagReport, render
from ..policy import (
    DataClass,
    HouseholdMember,
    MechanismKind,
    PolicyState,
    Role,
    Scope,
    utcnow,
)
from ..store import DocumentStore

logger = logging.getLogger(__name__)


class BackendError(Exception):
    pass


class NotRegistered(BackendError):
    pass


class ConsentMissing(BackendError):
    pass


# --- detector bundles --------------------------------------------------------


@dataclass
class DetectorBundle:
    bundle_version: str
    data: bytes  # zip archive of rule-table files plus manifest
    signature: str  # sha256 of the archive bytes

    @classmethod
    def from_tables(cls, tables: RuleTables, bundle_version: str) -> "DetectorBundle":
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as tmp:
            dump_rule_tables(tables, Path(tmp))
            files = {}
            for name in RULE_FILES:
                path = Path(tmp) / name
                files[name] = path.read_bytes() if path.exists() else b""
        manifest = {
            "bundle_version": bundle_version,
            "hashes": {name: hashlib.sha256(blob).hexdigest() for name, blob in files.items()},
        }
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("manifest.json", json.dumps(manifest, sort_keys=True))
            for name, blob in sorted(files.items()):
                zf.writestr(name, blob)
        data = buf.getvalue()
        return cls(bundle_version=bundle_version, data=data, signature=hashlib.sha256(data).hexdigest())


def verify_and_load_bundle(data: bytes, expected_signature: str) -> RuleTables:
    """Hash-verify a bundle before any parsing; a mismatch anywhere rejects
    the whole bundle."""
    if hashlib.sha256(data).hexdigest() != expected_signature:
        raise BackendError("bundle signature mismatch")
    import tempfile
    from pathlib import Path

    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        with tempfile.TemporaryDirectory() as tmp:
            for name, expected in manifest["hashes"].items():
                blob = zf.read(name)
                if hashlib.sha256(blob).hexdigest() != expected:
                    raise BackendError(f"bundle file {name} hash mismatch")
                (Path(tmp) / name).write_bytes(blob)
            return load_rule_tables(Path(tmp), version=manifest["bundle_version"])


# --- anonymization -----------------------------------------------------------


_PLACEHOLDER = {
    "date": "[DATE]",
    "time": "[TIME]",
    "phone": "[PHONE]",
    "link": "[LINK]",
    "email": "[EMAIL]",
    "ip": "[IP]",
    "ipv6": "[IPV6]",
    "price": "[PRICE]",
    "credit_card": "[CARD]",
    "street_address": "[ADDRESS]",
    "zip_code": "[ZIP]",
}


def _hash_id(value: str, salt: bytes) -> str:
    return hashlib.sha256(salt + value.encode()).hexdigest()[:16]


def anonymize_text(text: str, roster_names: list[str]) -> str:
    """Redact household names and detected PII to category placeholders.
    Idempotent: placeholders contain nothing the rules match."""
    for name in sorted(roster_names, key=len, reverse=True):
        if name:
            text = re.sub(re.escape(name), "[NAME]", text, flags=re.IGNORECASE)
    findings = detect_pii(text)
    for f in sorted(findings, key=lambda f: f.span[0], reverse=True):
        text = text[: f.span[0]] + _PLACEHOLDER[f.category] + text[f.span[1] :]
    return text


def anonymize(payload: dict, salt: bytes, roster_names: Optional[list[str]] = None) -> dict:
    """Member identifiers become salted hashes; free text is scrubbed."""
    out = dict(payload)
    for key in ("member_id", "peer", "username"):
        value = out.get(key)
        if value and not re.fullmatch(r"[0-9a-f]{16}", str(value)):  # idempotent
            out[key] = _hash_id(str(value), salt)
    if out.get("text"):
        out["text"] = anonymize_text(out["text"], roster_names or [])
    return out


# --- intake ------------------------------------------------------------------


@dataclass
class IntakeRecord:
    data_class: DataClass
    payload: dict
    consent_proof: dict  # {"policy_version": int, "scope": "allow"|"allow_anonymized"}
    received_at: datetime = field(default_factory=utcnow)


# --- registration ------------------------------------------------------------


@dataclass
class IwpRegistration:
    iwp_id: str
    household_id: str
    token: str
    last_seen: datetime = field(default_factory=utcnow)
    bundle_version: Optional[str] = None


class EncryptedKeyService(InMemoryKeyService):
    """Key service with keys encrypted at rest under the service master key."""

    def __init__(self, master_key: bytes) -> None:
        super().__init__()
        self._aead = AESGCM(hashlib.sha256(master_key).digest())

    def register(self, image_fp: str, audience: set[str], key: bytes) -> str:
        nonce = secrets.token_bytes(12)
        return super().register(image_fp, audience, nonce + self._aead.encrypt(nonce, key, None))

    def lookup(self, image_fp: str, viewer_id: str) -> Optional[bytes]:
        sealed = super().lookup(image_fp, viewer_id)
        if sealed is None:
            return None
        return self._aead.decrypt(sealed[:12], sealed[12:], None)


class Backend:
    def __init__(self, master_key: bytes = b"cfas-dev-master", registry: Optional[DetectorRegistry] = None) -> None:
        self._lock = threading.Lock()
        self._enrollment_codes: set[str] = set()
        self._registrations: dict[str, IwpRegistration] = {}  # by token
        self._bundles: list[DetectorBundle] = []
        self.intake_store = DocumentStore()
        self.flag_store = DocumentStore()
        self.keys = EncryptedKeyService(master_key)
        self._tables = load_rule_tables()
        self._registry = registry or build_registry(self._tables, blob_fetch=lambda ref: None)
        self._fallback_dals: list[DataAccessLayer] = []
        self.publish_bundle(DetectorBundle.from_tables(self._tables, self._tables.version))

    # --- enrollment ------------------------------------------------------

    def issue_enrollment_code(self) -> str:
        code = secrets.token_hex(4)
        with self._lock:
            self._enrollment_codes.add(code)
        return code

    def register_iwp(self, household_id: str, enrollment_code: str) -> IwpRegistration:
        with self._lock:
            if enrollment_code not in self._enrollment_codes:
                raise NotRegistered("invalid enrollment code")
            self._enrollment_codes.discard(enrollment_code)
            reg = IwpRegistration(
                iwp_id=f"iwp-{secrets.token_hex(4)}",
                household_id=household_id,
                token=secrets.token_hex(16),
            )
            self._registrations[reg.token] = reg
            return reg

    def authenticate(self, token: Optional[str]) -> IwpRegistration:
        with self._lock:
            reg = self._registrations.get(token or "")
        if reg is None:
            raise NotRegistered("unknown or missing token")
        reg.last_seen = utcnow()
        return reg

    # --- bundles ----------------------------------------------------------

    def publish_bundle(self, bundle: DetectorBundle) -> str:
        with self._lock:
            self._bundles.append(bundle)  # latest pointer = list tail, swapped atomically
        return bundle.bundle_version

    def latest_bundle(self) -> DetectorBundle:
        with self._lock:
            return self._bundles[-1]

    def sync_bundles(self, token: str, current_version: Optional[str]) -> Optional[DetectorBundle]:
        """Latest bundle for a registered IWP, or None when already current."""
        reg = self.authenticate(token)
        latest = self.latest_bundle()
        if current_version == latest.bundle_version:
            return None
        reg.bundle_version = latest.bundle_version
        return latest

    # --- intake -----------------------------------------------------------

    def intake(self, token: str, record: IntakeRecord, scope_decision: Scope) -> str:
        reg = self.authenticate(token)
        if scope_decision not in (Scope.ALLOW, Scope.ALLOW_ANONYMIZED):
            raise ConsentMissing(f"scope decision {scope_decision.value} does not permit intake")
        proof = record.consent_proof or {}
        if "policy_version" not in proof or proof.get("scope") != scope_decision.value:
            raise ConsentMissing("missing or inconsistent consent proof")
        payload = record.payload
        if scope_decision is Scope.ALLOW_ANONYMIZED:
            for key in ("member_id", "peer", "username"):
                value = payload.get(key)
                if value and not re.fullmatch(r"[0-9a-f]{16}", str(value)):
                    raise ConsentMissing("anonymized intake still carries raw identifiers")
        return self.intake_store.store(
            {
                "household": reg.household_id,
                "data_class": record.data_class.value,
                "payload": payload,
                "consent_proof": proof,
                "received_at": record.received_at.isoformat(),
            }
        )

    def delete_household_data(self, household_id: str) -> int:
        removed = 0
        for key, doc in list(self.intake_store.scan()):
            if isinstance(doc, dict) and doc.get("household") == household_id:
                self.intake_store.delete(key)
                removed += 1
        return removed

    # --- fallback analysis --------------------------------------------------

    def fallback_analyze(self, token: str, event_doc: dict) -> dict:
        """Run one event through a private DAL instance and delete every
        artifact before answering, whether or not anything was detected."""
        reg = self.authenticate(token)
        dal = DataAccessLayer(self._registry, workers=2)
        self._fallback_dals.append(dal)  # kept visible so deletion is provable by scan
        policy = PolicyState(
            household_id=reg.household_id,
            members=[
                HouseholdMember("fallback-child", Role.CHILD, "you"),
                HouseholdMember("fallback-custodian", Role.CUSTODIAN, "custodian"),
            ],
        )
        response: dict = {"triggered": False, "notifications": []}
        try:
            event = TrafficEvent.from_json(event_doc)
            decided = dal.process_event(event, policy)
            for item in decided:
                for intent in item.intents:
                    response["triggered"] = True
                    child_text = render(intent, policy, "you")[0].text
                    response["notifications"].append(
                        {"mechanism": intent.mechanism.value, "text": child_text}
                    )
        except Exception as exc:
            logger.warning("fallback analysis error: %s", exc)
            response = {"triggered": False, "notifications": [], "note": "analysis unavailable"}
        finally:
            dal.purge()
            dal.close()
        return response

    def scan_for_bytes(self, needle: bytes) -> bool:
        """Deletion proof helper: does any store still contain `needle`?"""
        stores = [self.intake_store, self.flag_store]
        stores.extend(dal.store for dal in self._fallback_dals)
        stores.extend(dal.blobs for dal in self._fallback_dals)
        for store in stores:
            for _, doc in store.scan():
                blob = doc if isinstance(doc, bytes) else json.dumps(doc, default=str).encode()
                if needle in blob:
                    return True
        return False

    # --- flags + retraining ---------------------------------------------------

    def store_flag(self, token: str, flag_doc: dict) -> str:
        self.authenticate(token)
        return self.flag_store.store(flag_doc)

    def retrain_stub(self, flags: list[FlagReport]) -> DetectorBundle:
        """Aggregate flagged terms into the bullying lexicon and republish.
        No statistical learning: frequency rule only (threshold 3)."""
        tables = load_rule_tables()
        tables.bullying = dict(self._tables.bullying)
        missed: Counter = Counter()
        wrong: Counter = Counter()
        for flag in flags:
            tokens = set(tokenize(flag.comment or ""))
            if flag.direction is FlagDirection.MISSED_DETECTION:
                missed.update(tokens)
            else:
                wrong.update(tokens)
        for term, count in missed.items():
            if count >= 3 and term not in tables.bullying:
                tables.bullying[term] = 1.0
        for term, count in wrong.items():
            if count >= 3 and term in tables.bullying:
                tables.bullying[term] = tables.bullying[term] / 2.0
        version = f"retrain-{len(self._bundles) + 1}"
        tables.version = version
        self._tables = tables
        bundle = DetectorBundle.from_tables(tables, version)
        self.publish_bundle(bundle)
        return bundle
