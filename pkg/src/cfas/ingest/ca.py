"""Per-install certificate authority for TLS termination of intercepted
hosts. Leaf certificates are minted and cached per hostname; clients that
trust the CA file see valid chains for every intercepted site."""

from __future__ import annotations

import datetime
import ssl
import tempfile
import threading
from pathlib import Path
from typing import Optional

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.x509.oid import NameOID

_VALIDITY = datetime.timedelta(days=365)


def _new_key() -> rsa.RSAPrivateKey:
    return rsa.generate_private_key(public_exponent=65537, key_size=2048)


class CertificateAuthority:
    def __init__(self, workdir: Optional[Path] = None) -> None:
        self._workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="cfas-ca-"))
        self._workdir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._leaf_contexts: dict[str, ssl.SSLContext] = {}
        self._key = _new_key()
        name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "CFAS Intercepting Proxy CA")])
        now = datetime.datetime.now(datetime.timezone.utc)
        self._cert = (
            x509.CertificateBuilder()
            .subject_name(name)
            .issuer_name(name)
            .public_key(self._key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - datetime.timedelta(minutes=5))
            .not_valid_after(now + _VALIDITY)
            .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
            .sign(self._key, hashes.SHA256())
        )
        self.ca_cert_path = self._workdir / "ca.pem"
        self.ca_cert_path.write_bytes(self._cert.public_bytes(serialization.Encoding.PEM))

    def _mint_leaf(self, hostname: str) -> tuple[bytes, bytes]:
        key = _new_key()
        now = datetime.datetime.now(datetime.timezone.utc)
        cert = (
            x509.CertificateBuilder()
            .subject_name(x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, hostname)]))
            .issuer_name(self._cert.subject)
            .public_key(key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - datetime.timedelta(minutes=5))
            .not_valid_after(now + _VALIDITY)
            .add_extension(x509.SubjectAlternativeName([x509.DNSName(hostname)]), critical=False)
            .sign(self._key, hashes.SHA256())
        )
        cert_pem = cert.public_bytes(serialization.Encoding.PEM)
        key_pem = key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.TraditionalOpenSSL,
            serialization.NoEncryption(),
        )
        return cert_pem, key_pem

    def server_context(self, hostname: str) -> ssl.SSLContext:
        with self._lock:
            ctx = self._leaf_contexts.get(hostname)
            if ctx is None:
                cert_pem, key_pem = self._mint_leaf(hostname)
                cert_path = self._workdir / f"{hostname}.pem"
                cert_path.write_bytes(cert_pem + key_pem)
                ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
                ctx.load_cert_chain(cert_path)
                self._leaf_contexts[hostname] = ctx
            return ctx

    def client_context(self) -> ssl.SSLContext:
        """A context that trusts this CA (for test clients)."""
        ctx = ssl.create_default_context(cafile=str(self.ca_cert_path))
        return ctx
