"""Sensitive-image protection: LSB watermarking, encrypt-then-embed
steganography into a bundled static cover image, and audience-gated
decryption through the key service.

The cover image alone must leak nothing: the payload is always
authenticated-encrypted with a fresh key before a single bit is embedded.
Outputs are lossless PNG; LSB payloads do not survive lossy re-encoding.
"""

from __future__ import annotations

import io
import logging
import secrets
import struct
import threading
import uuid
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from typing import Optional, Protocol

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from PIL import Image

from .events import content_address

logger = logging.getLogger(__name__)

STEGO_MAGIC = 0x43464153  # embedded payload tag
WATERMARK_MAGIC = 0x4346574D
WATERMARK_REGION_PIXELS = 512  # blue-channel LSBs of the first 512 pixels
MIN_WATERMARK_PIXELS = 1024
KEY_BITS = 128
NONCE_BYTES = 12


class ImageGuardError(Exception):
    pass


class CapacityExceeded(ImageGuardError):
    def __init__(self, required_bits: int, available_bits: int) -> None:
        super().__init__(f"cover capacity exceeded: need {required_bits} bits, have {available_bits}")
        self.required_bits = required_bits
        self.available_bits = available_bits


class KeyServiceUnavailable(ImageGuardError):
    """Protection is fail-closed: no key registration, no send."""


# --- bit helpers ------------------------------------------------------------


def _bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def _bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(bits.astype(np.uint8)).tobytes()


def _png_bytes(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def default_cover() -> bytes:
    return (resources.files("cfas") / "assets" / "cover.png").read_bytes()


# --- watermark ---------------------------------------------------------------


@dataclass(frozen=True)
class Watermark:
    household_id: str
    member_id: str
    timestamp: datetime

    def pack(self) -> bytes:
        ts = int(self.timestamp.replace(tzinfo=self.timestamp.tzinfo or timezone.utc).timestamp())
        body = f"{self.household_id}|{self.member_id}|{ts}".encode()
        signature = zlib.crc32(body)
        return struct.pack(">IH", WATERMARK_MAGIC, len(body)) + body + struct.pack(">I", signature)

    @classmethod
    def unpack(cls, blob: bytes) -> Optional["Watermark"]:
        if len(blob) < 10:
            return None
        magic, length = struct.unpack(">IH", blob[:6])
        if magic != WATERMARK_MAGIC or len(blob) < 6 + length + 4:
            return None
        body = blob[6 : 6 + length]
        (signature,) = struct.unpack(">I", blob[6 + length : 10 + length])
        if zlib.crc32(body) != signature:
            return None
        try:
            household_id, member_id, ts = body.decode().rsplit("|", 2)
            return cls(household_id, member_id, datetime.fromtimestamp(int(ts), tz=timezone.utc))
        except (ValueError, UnicodeDecodeError):
            return None


def watermark(image_bytes: bytes, mark: Watermark) -> bytes:
    """Embed the mark in the blue-channel LSBs of the image's fixed header
    region. Max per-channel delta is 1; survives lossless re-save."""
    image = Image.open(io.BytesIO(image_bytes)).convert("RGB")
    pixels = np.array(image)
    flat_blue = pixels[..., 2].reshape(-1)
    if flat_blue.size < MIN_WATERMARK_PIXELS:
        raise ImageGuardError(f"image too small to watermark ({flat_blue.size} px, need {MIN_WATERMARK_PIXELS})")
    payload = mark.pack()
    bits = _bytes_to_bits(payload)
    if bits.size > WATERMARK_REGION_PIXELS:
        raise ImageGuardError("watermark payload exceeds the header region")
    region = flat_blue[: bits.size]
    flat_blue[: bits.size] = (region & 0xFE) | bits
    pixels[..., 2] = flat_blue.reshape(pixels[..., 2].shape)
    return _png_bytes(Image.fromarray(pixels))


def extract_watermark(image_bytes: bytes) -> Optional[Watermark]:
    image = Image.open(io.BytesIO(image_bytes)).convert("RGB")
    flat_blue = np.array(image)[..., 2].reshape(-1)
    if flat_blue.size < WATERMARK_REGION_PIXELS:
        return None
    bits = flat_blue[:WATERMARK_REGION_PIXELS] & 1
    return Watermark.unpack(_bits_to_bytes(bits))


# --- key service -------------------------------------------------------------


class KeyService(Protocol):
    def register(self, image_fp: str, audience: set[str], key: bytes) -> str: ...

    def lookup(self, image_fp: str, viewer_id: str) -> Optional[bytes]: ...


class InMemoryKeyService:
    """Reference key service: (image_fp, audience, key) registrations with
    audience-gated lookup. The Back-End wraps this behind HTTP."""

    def __init__(self) -> None:
        self._keys: dict[str, tuple[frozenset[str], bytes]] = {}
        self._by_fp: dict[str, list[str]] = {}
        self._lock = threading.Lock()

    def register(self, image_fp: str, audience: set[str], key: bytes) -> str:
        key_ref = uuid.uuid4().hex
        with self._lock:
            self._keys[key_ref] = (frozenset(audience), key)
            self._by_fp.setdefault(image_fp, []).append(key_ref)
        return key_ref

    def lookup(self, image_fp: str, viewer_id: str) -> Optional[bytes]:
        with self._lock:
            for key_ref in reversed(self._by_fp.get(image_fp, [])):
                audience, key = self._keys[key_ref]
                if viewer_id in audience:
                    return key
        return None


# --- steganography -----------------------------------------------------------


@dataclass
class ProtectedImage:
    cover_bytes: bytes  # PNG with the embedded encrypted payload
    image_fp: str  # content hash of the ORIGINAL image bytes
    audience: frozenset[str]
    key_ref: str


_HEADER_BITS = 32 + 8 + 32  # magic | version u8 | ciphertext length u32 BE
STEGO_VERSION = 1


def embed_bits(cover: Image.Image, payload: bytes) -> Image.Image:
    pixels = np.array(cover.convert("RGB"))
    flat = pixels.reshape(-1)  # 1 bit per channel per pixel, row-major
    header = struct.pack(">IBI", STEGO_MAGIC, STEGO_VERSION, len(payload))
    bits = _bytes_to_bits(header + payload)
    if bits.size > flat.size:
        raise CapacityExceeded(required_bits=bits.size, available_bits=flat.size)
    flat[: bits.size] = (flat[: bits.size] & 0xFE) | bits
    return Image.fromarray(flat.reshape(pixels.shape))


def extract_bits(stego: Image.Image) -> Optional[bytes]:
    flat = np.array(stego.convert("RGB")).reshape(-1)
    if flat.size < _HEADER_BITS:
        return None
    header = _bits_to_bytes(flat[:_HEADER_BITS] & 1)
    magic, version, length = struct.unpack(">IBI", header)
    if magic != STEGO_MAGIC or version != STEGO_VERSION:
        return None
    total_bits = _HEADER_BITS + length * 8
    if total_bits > flat.size:
        return None
    return _bits_to_bytes(flat[_HEADER_BITS:total_bits] & 1)


class TamperLog:
    def __init__(self) -> None:
        self.entries: list[str] = []
        self._lock = threading.Lock()

    def record(self, image_fp: str, reason: str) -> None:
        with self._lock:
            self.entries.append(f"{image_fp}:{reason}")
        logger.warning("tamper detected on %s: %s", image_fp, reason)


def protect(
    image_bytes: bytes,
    audience: set[str],
    key_service: KeyService,
    cover_bytes: Optional[bytes] = None,
) -> ProtectedImage:
    """Encrypt the original with a fresh key and embed the ciphertext in
    the static cover. Key-service failure aborts the protection entirely
    (fail-closed: a sensitive image is never sent unprotected)."""
    cover = Image.open(io.BytesIO(cover_bytes if cover_bytes is not None else default_cover()))
    key = AESGCM.generate_key(bit_length=KEY_BITS)
    nonce = secrets.token_bytes(NONCE_BYTES)
    ciphertext = nonce + AESGCM(key).encrypt(nonce, image_bytes, None)
    stego = embed_bits(cover, ciphertext)
    image_fp = content_address(image_bytes)
    try:
        key_ref = key_service.register(image_fp, audience, key)
    except Exception as exc:
        raise KeyServiceUnavailable(f"key registration failed: {exc}") from exc
    return ProtectedImage(
        cover_bytes=_png_bytes(stego),
        image_fp=image_fp,
        audience=frozenset(audience),
        key_ref=key_ref,
    )


def unprotect(
    protected: ProtectedImage,
    viewer_id: str,
    key_service: KeyService,
    tamper_log: Optional[TamperLog] = None,
) -> bytes:
    """Return the original image for authorized viewers, the cover bytes
    for everyone else. Deliberately no error oracle: an unauthorized
    viewer cannot distinguish 'not protected' from 'not allowed'."""
    try:
        key = key_service.lookup(protected.image_fp, viewer_id)
    except Exception as exc:
        logger.warning("key lookup failed: %s", exc)
        key = None
    if key is None:
        return protected.cover_bytes
    payload = extract_bits(Image.open(io.BytesIO(protected.cover_bytes)))
    if payload is None or len(payload) <= NONCE_BYTES:
        if tamper_log:
            tamper_log.record(protected.image_fp, "payload missing or truncated")
        return protected.cover_bytes
    nonce, ciphertext = payload[:NONCE_BYTES], payload[NONCE_BYTES:]
    try:
        return AESGCM(key).decrypt(nonce, ciphertext, None)
    except InvalidTag:
        if tamper_log:
            tamper_log.record(protected.image_fp, "authentication failed")
        return protected.cover_bytes
