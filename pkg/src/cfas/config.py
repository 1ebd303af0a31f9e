"""TOML configuration for the service runner.

Every field has a default so `cfas run` works with no config file; invalid
values raise :class:`ConfigError` naming the offending key.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class ConfigError(Exception):
    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class InterceptHost:
    hostname: str
    platform: str


@dataclass
class CfasConfig:
    iwp_port: int = 8710
    backend_port: int = 8720
    osn_port: int = 8730
    api_port: int = 8740
    proxy_port: int = 8750
    hold_deadline_ms: int = 2000
    heartbeat_interval_s: float = 10.0
    household_id: str = "household-1"
    blocklist: list[str] = field(default_factory=list)
    intercept_hosts: list[InterceptHost] = field(
        default_factory=lambda: [InterceptHost("osn.local", "facebook_like")]
    )
    ca_dir: Optional[str] = None


_PORT_KEYS = ("iwp_port", "backend_port", "osn_port", "api_port", "proxy_port")
_VALID_PLATFORMS = {"facebook_like", "twitter_like", "youtube_like"}


def load_config(path: Optional[str] = None) -> CfasConfig:
    doc: dict = {}
    if path is not None:
        raw = Path(path)
        if not raw.exists():
            raise ConfigError("config", f"file not found: {path}")
        doc = tomllib.loads(raw.read_text())
    cfg = CfasConfig()
    for key in _PORT_KEYS:
        if key in doc:
            value = doc[key]
            if not isinstance(value, int) or not (0 <= value <= 65535):
                raise ConfigError(key, f"expected a port number, got {value!r}")
            setattr(cfg, key, value)
    if "hold_deadline_ms" in doc:
        value = doc["hold_deadline_ms"]
        if not isinstance(value, int) or value <= 0:
            raise ConfigError("hold_deadline_ms", f"expected a positive integer, got {value!r}")
        cfg.hold_deadline_ms = value
    if "heartbeat_interval_s" in doc:
        value = doc["heartbeat_interval_s"]
        if not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError("heartbeat_interval_s", f"expected a positive number, got {value!r}")
        cfg.heartbeat_interval_s = float(value)
    if "household_id" in doc:
        value = doc["household_id"]
        if not isinstance(value, str) or not value:
            raise ConfigError("household_id", "expected a non-empty string")
        cfg.household_id = value
    if "blocklist" in doc:
        value = doc["blocklist"]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError("blocklist", "expected a list of hostnames")
        cfg.blocklist = [v.lower() for v in value]
    if "intercept_hosts" in doc:
        value = doc["intercept_hosts"]
        if not isinstance(value, list):
            raise ConfigError("intercept_hosts", "expected an array of tables")
        hosts = []
        for i, entry in enumerate(value):
            if not isinstance(entry, dict) or "hostname" not in entry:
                raise ConfigError(f"intercept_hosts[{i}]", "expected a table with 'hostname'")
            platform = entry.get("platform", "facebook_like")
            if platform not in _VALID_PLATFORMS:
                raise ConfigError(
                    f"intercept_hosts[{i}].platform",
                    f"expected one of {sorted(_VALID_PLATFORMS)}, got {platform!r}",
                )
            hosts.append(InterceptHost(entry["hostname"], platform))
        cfg.intercept_hosts = hosts
    if "ca_dir" in doc:
        value = doc["ca_dir"]
        if not isinstance(value, str):
            raise ConfigError("ca_dir", "expected a path string")
        cfg.ca_dir = value
    return cfg
