from .ca import CertificateAuthority
from .extract import (
    OUTBOUND_ENDPOINTS,
    SELECTOR_TABLES,
    extract_events,
    extract_outbound,
    parse_document,
)
from .heartbeat import DEFAULT_INTERVAL_S, DEFAULT_MISSED_THRESHOLD, HeartbeatMonitor, HeartbeatStatus
from .proxy import (
    BLOCK_PAGE,
    HOLD_PAGE,
    Flow,
    GateResult,
    InterceptingProxy,
    Pipeline,
    ProxyConfig,
    UpstreamTarget,
)

__all__ = [
    "BLOCK_PAGE",
    "CertificateAuthority",
    "DEFAULT_INTERVAL_S",
    "DEFAULT_MISSED_THRESHOLD",
    "Flow",
    "GateResult",
    "HOLD_PAGE",
    "HeartbeatMonitor",
    "HeartbeatStatus",
    "InterceptingProxy",
    "OUTBOUND_ENDPOINTS",
    "Pipeline",
    "ProxyConfig",
    "SELECTOR_TABLES",
    "UpstreamTarget",
    "extract_events",
    "extract_outbound",
    "parse_document",
]
