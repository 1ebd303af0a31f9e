"""Liveness monitoring for the in-home appliance.

The child's device-side hook pings periodically; if ``missed_threshold``
consecutive intervals pass without a ping the member is flagged unresponsive
and the custodian is notified once per outage.  The clock is injectable so
tests can simulate outages without sleeping.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

DEFAULT_INTERVAL_S = 10.0
DEFAULT_MISSED_THRESHOLD = 3


@dataclass
class HeartbeatStatus:
    member_id: str
    responsive: bool
    last_seen: Optional[float]


class HeartbeatMonitor:
    def __init__(
        self,
        interval_s: float = DEFAULT_INTERVAL_S,
        missed_threshold: int = DEFAULT_MISSED_THRESHOLD,
        clock: Callable[[], float] = time.monotonic,
        on_unresponsive: Optional[Callable[[str], None]] = None,
        on_recovered: Optional[Callable[[str], None]] = None,
    ) -> None:
        self.interval_s = interval_s
        self.missed_threshold = missed_threshold
        self._clock = clock
        self._on_unresponsive = on_unresponsive or (lambda member_id: None)
        self._on_recovered = on_recovered or (lambda member_id: None)
        self._lock = threading.Lock()
        self._last_seen: dict[str, float] = {}
        self._alerted: set[str] = set()

    def beat(self, member_id: str) -> None:
        with self._lock:
            self._last_seen[member_id] = self._clock()
            if member_id in self._alerted:
                self._alerted.discard(member_id)
                recovered = True
            else:
                recovered = False
        if recovered:
            self._on_recovered(member_id)

    def status(self, member_id: str) -> HeartbeatStatus:
        with self._lock:
            last = self._last_seen.get(member_id)
            if last is None:
                return HeartbeatStatus(member_id, responsive=False, last_seen=None)
            gap = self._clock() - last
            responsive = gap < self.interval_s * self.missed_threshold
            return HeartbeatStatus(member_id, responsive, last)

    def check(self) -> list[str]:
        """Sweep all members; fire the unresponsive callback on transitions.
        Returns members newly marked unresponsive."""
        newly_down: list[str] = []
        with self._lock:
            now = self._clock()
            for member_id, last in self._last_seen.items():
                down = (now - last) >= self.interval_s * self.missed_threshold
                if down and member_id not in self._alerted:
                    self._alerted.add(member_id)
                    newly_down.append(member_id)
        for member_id in newly_down:
            self._on_unresponsive(member_id)
        return newly_down
