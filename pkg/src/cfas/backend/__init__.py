from .core import (
    Backend,
    BackendError,
    ConsentMissing,
    DetectorBundle,
    EncryptedKeyService,
    IntakeRecord,
    IwpRegistration,
    NotRegistered,
    anonymize,
    anonymize_text,
    verify_and_load_bundle,
)
from .service import BackendService, RemoteKeyService

__all__ = [
    "Backend",
    "BackendError",
    "BackendService",
    "ConsentMissing",
    "DetectorBundle",
    "EncryptedKeyService",
    "IntakeRecord",
    "IwpRegistration",
    "NotRegistered",
    "RemoteKeyService",
    "anonymize",
    "anonymize_text",
    "verify_and_load_bundle",
]
