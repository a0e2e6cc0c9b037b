"""
Clock abstraction shared by rate control, the engine and the simulator.

MonotonicClock wraps time.monotonic; SimulatedClock only moves when
someone sleeps on it or advances it, so timing-sensitive tests run
deterministically and independently of wall-clock speed.
"""

import threading
import time


class MonotonicClock:
    """Real time, in seconds."""

    simulated = False

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float):
        if seconds > 0:
            time.sleep(seconds)


class SimulatedClock:
    """
    Manually driven clock.

    sleep() advances the shared time immediately instead of blocking, so a
    sender waiting on the token bucket moves simulated time forward.
    """

    simulated = True

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float):
        if seconds > 0:
            self.advance(seconds)

    def advance(self, seconds: float) -> float:
        with self._lock:
            self._now += seconds
            return self._now
