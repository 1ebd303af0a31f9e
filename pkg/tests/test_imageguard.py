"""Watermarking and encrypt-then-embed steganography."""

import io
import struct
import zlib
from datetime import datetime, timezone

import numpy as np
import pytest
from PIL import Image

from cfas import imageguard
from cfas.imageguard import (
    KEY_BITS,
    MIN_WATERMARK_PIXELS,
    NONCE_BYTES,
    STEGO_MAGIC,
    STEGO_VERSION,
    WATERMARK_MAGIC,
    CapacityExceeded,
    ImageGuardError,
    InMemoryKeyService,
    KeyServiceUnavailable,
    TamperLog,
    Watermark,
    default_cover,
    extract_watermark,
    protect,
    unprotect,
    watermark,
)

from .conftest import random_png

NOW = datetime(2026, 8, 26, 12, 0, 0, tzinfo=timezone.utc)


class FailingKeyService:
    def register(self, image_fp, audience, key):
        raise ConnectionError("key service down")

    def lookup(self, image_fp, viewer_id):
        raise ConnectionError("key service down")


class TestWatermark:
    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        original = random_png(rng, 64, 64)
        marked = watermark(original, Watermark(household_id="household-1", member_id="child-1", timestamp=NOW))
        mark = extract_watermark(marked)
        assert mark is not None
        assert mark.household_id == "household-1"
        assert mark.member_id == "child-1"
        assert mark.timestamp == NOW

    def test_unmarked_image_yields_none(self):
        assert extract_watermark(random_png(np.random.default_rng(2), 64, 64)) is None

    def test_too_small_image_rejected(self):
        tiny = random_png(np.random.default_rng(3), 16, 16)  # 256 px < 1024
        with pytest.raises(ImageGuardError):
            watermark(tiny, Watermark("h", "m", NOW))
        assert MIN_WATERMARK_PIXELS == 1024

    def test_blue_channel_delta_at_most_one(self):
        rng = np.random.default_rng(4)
        original = random_png(rng, 40, 40)
        marked = watermark(original, Watermark("household-1", "child-1", NOW))
        before = np.array(Image.open(io.BytesIO(original)).convert("RGB")).astype(int)
        after = np.array(Image.open(io.BytesIO(marked)).convert("RGB")).astype(int)
        delta = np.abs(after - before)
        assert delta[..., 0].max() == 0  # red untouched
        assert delta[..., 1].max() == 0  # green untouched
        assert delta[..., 2].max() <= 1  # blue LSB only

    def test_pack_layout_is_exact(self):
        mark = Watermark("o", "n", NOW)
        blob = mark.pack()
        magic, length = struct.unpack(">IH", blob[:6])
        assert magic == WATERMARK_MAGIC
        body = blob[6 : 6 + length]
        (crc,) = struct.unpack(">I", blob[6 + length :])
        assert crc == zlib.crc32(body)

    def test_corrupted_crc_yields_none(self):
        marked = watermark(random_png(np.random.default_rng(5), 40, 40), Watermark("o", "m", NOW))
        pixels = np.array(Image.open(io.BytesIO(marked)).convert("RGB"))
        pixels[0, 10, 2] ^= 1  # flip one embedded bit
        buf = io.BytesIO()
        Image.fromarray(pixels).save(buf, format="PNG")
        assert extract_watermark(buf.getvalue()) is None


class TestProtect:
    def test_stego_property_suite(self):
        """200 random images <= 64x64 with random audiences: authorized
        round-trip is byte-identical, unauthorized viewers get the cover,
        a single-bit tamper yields cover plus a tamper-log entry, and the
        stego cover differs from the baseline by at most 1 per channel."""
        rng = np.random.default_rng(20240917)
        keys = InMemoryKeyService()
        cover_reference = np.array(
            Image.open(io.BytesIO(default_cover())).convert("RGB")
        ).astype(int)
        viewers = ["parent-1", "child-1", "aunt-1", "stranger-1"]
        for i in range(200):
            width = int(rng.integers(1, 65))
            height = int(rng.integers(1, 65))
            original = random_png(rng, width, height)
            audience = set(rng.choice(viewers[:3], size=int(rng.integers(1, 4)), replace=False))
            protected = protect(original, audience, keys)

            member = sorted(audience)[0]
            assert unprotect(protected, member, keys) == original

            outsider = next(v for v in viewers if v not in audience)
            assert unprotect(protected, outsider, keys) == protected.cover_bytes

            stego = np.array(
                Image.open(io.BytesIO(protected.cover_bytes)).convert("RGB")
            ).astype(int)
            assert np.abs(stego - cover_reference).max() <= 1

            if i % 20 == 0:  # tamper check on a sample; it is the slow path
                tampered_pixels = stego.astype(np.uint8).copy()
                tampered_pixels[7, 5, 1] ^= 1
                buf = io.BytesIO()
                Image.fromarray(tampered_pixels).save(buf, format="PNG")
                tampered = imageguard.ProtectedImage(
                    cover_bytes=buf.getvalue(),
                    image_fp=protected.image_fp,
                    audience=protected.audience,
                    key_ref=protected.key_ref,
                )
                log = TamperLog()
                out = unprotect(tampered, member, keys, tamper_log=log)
                assert out == tampered.cover_bytes
                assert log.entries and log.entries[-1].startswith(protected.image_fp)

    def test_fresh_key_per_protect(self):
        keys = InMemoryKeyService()
        original = random_png(np.random.default_rng(6), 16, 16)
        first = protect(original, {"parent-1"}, keys)
        second = protect(original, {"parent-1"}, keys)
        assert first.key_ref != second.key_ref
        assert keys.lookup(first.image_fp, "parent-1") is not None
        # same fingerprint, two registered keys; ciphertexts differ
        assert first.cover_bytes != second.cover_bytes

    def test_key_service_outage_fails_closed(self):
        original = random_png(np.random.default_rng(7), 16, 16)
        with pytest.raises(KeyServiceUnavailable):
            protect(original, {"parent-1"}, FailingKeyService())

    def test_unprotect_has_no_error_oracle(self):
        """Unauthorized viewer of a protected image and any viewer of a
        plain cover get byte-identical 'cover only' behavior."""
        keys = InMemoryKeyService()
        original = random_png(np.random.default_rng(8), 16, 16)
        protected = protect(original, {"parent-1"}, keys)
        unauthorized = unprotect(protected, "stranger-1", keys)
        plain = imageguard.ProtectedImage(
            cover_bytes=protected.cover_bytes,
            image_fp="0" * 64,
            audience=frozenset(),
            key_ref="",
        )
        no_key = unprotect(plain, "stranger-1", keys)
        assert unauthorized == protected.cover_bytes
        assert no_key == plain.cover_bytes

    def test_capacity_exceeded(self):
        keys = InMemoryKeyService()
        too_big = random_png(np.random.default_rng(9), 400, 400)
        with pytest.raises(CapacityExceeded) as err:
            protect(too_big, {"parent-1"}, keys)
        assert err.value.required_bits > err.value.available_bits

    def test_payload_layout_bit_exact(self):
        """Independent extraction oracle: read LSBs row-major, 1 bit per
        channel, and parse magic | version | length | ciphertext."""
        keys = InMemoryKeyService()
        original = random_png(np.random.default_rng(10), 8, 8)
        protected = protect(original, {"parent-1"}, keys)
        pixels = np.array(Image.open(io.BytesIO(protected.cover_bytes)).convert("RGB"))
        bits = (pixels.reshape(-1) & 1).astype(np.uint8)
        header = np.packbits(bits[:72]).tobytes()
        magic, version, length = struct.unpack(">IBI", header)
        assert magic == STEGO_MAGIC
        assert version == STEGO_VERSION
        ciphertext = np.packbits(bits[72 : 72 + length * 8]).tobytes()
        nonce, sealed = ciphertext[:NONCE_BYTES], ciphertext[NONCE_BYTES:]
        key = keys.lookup(protected.image_fp, "parent-1")
        assert key is not None and len(key) * 8 == KEY_BITS
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM

        assert AESGCM(key).decrypt(nonce, sealed, None) == original

    def test_cover_is_lossless_png(self):
        keys = InMemoryKeyService()
        protected = protect(random_png(np.random.default_rng(11), 8, 8), {"p"}, keys)
        image = Image.open(io.BytesIO(protected.cover_bytes))
        assert image.format == "PNG"
