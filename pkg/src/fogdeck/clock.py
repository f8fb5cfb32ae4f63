"""Wall and virtual clocks.

Components never call time.time() directly; they ask their clock. A
scenario driver advances a VirtualClock in fixed steps, which is what
lets year-scale drift checks and multi-minute failovers run in seconds.
"""

from __future__ import annotations

import threading
import time
from typing import Callable, Protocol

# Fixed scenario epoch (2024-01-01T00:00:00Z) so virtual-time runs are
# reproducible down to the timestamp.
SCENARIO_EPOCH_MS = 1_704_067_200_000


class Clock(Protocol):
    def now_ms(self) -> int: ...


class RealClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)


class VirtualClock:
    """Driver-advanced clock; reads are monotone and thread-safe."""

    def __init__(self, start_ms: int = SCENARIO_EPOCH_MS):
        self.start_ms = start_ms
        self._now_ms = start_ms
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now_ms

    def advance(self, step_ms: int) -> int:
        with self._lock:
            self._now_ms += step_ms
            return self._now_ms

    def elapsed_ms(self) -> int:
        return self.now_ms() - self.start_ms


class Ticker:
    """Background loop calling fn(now_ms) every interval; real-clock mode only."""

    def __init__(self, clock: Clock, interval_s: float, fn: Callable[[int], None], name: str):
        self.clock = clock
        self.interval_s = interval_s
        self.fn = fn
        self.name = name
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name=name, daemon=True)

    def start(self) -> None:
        self._thread.start()

    def _run(self) -> None:
        while not self._stop.wait(self.interval_s):
            try:
                self.fn(self.clock.now_ms())
            except Exception:
                import logging

                logging.getLogger(__name__).exception("%s tick failed", self.name)

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)
