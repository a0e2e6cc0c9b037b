"""
Send Rate Control
=================
Token bucket shared by all sender threads.

The bucket holds at most max(batch, target / 100) tokens (10 ms worth at
the target rate), starts empty and refills in proportion to the time
elapsed on the injected clock, so bursts stay short while batched sends
keep the long-run rate on target.

Usage:
    policy = RatePolicy.pps(10_000)
    bucket = TokenBucket(policy, clock)
    grant = tokens_acquire(bucket, 64)
    if not grant.permitted:
        clock.sleep(grant.wait)
"""

import enum
import logging
import math
import re
import threading
from dataclasses import dataclass
from typing import Optional

from .clock import MonotonicClock
from .config import DEFAULT_BATCH, ETHERNET_WIRE_OVERHEAD
from .errors import ConfigError

logger = logging.getLogger(__name__)

_BANDWIDTH_SUFFIXES = {'': 1, 'K': 10 ** 3, 'M': 10 ** 6, 'G': 10 ** 9}
_BANDWIDTH_RE = re.compile(r'^\s*(\d+(?:\.\d+)?)\s*([KMG]?)(?:bps|b/s)?\s*$', re.IGNORECASE)

# Float refill can land a hair below a whole token.
_TOKEN_EPSILON = 1e-9
# Shortest wait handed out; smaller sleeps may not move a float clock.
_MIN_WAIT_SECS = 1e-6


class RateMode(enum.Enum):
    PPS = 'pps'
    BPS = 'bps'
    UNLIMITED = 'unlimited'


@dataclass(frozen=True)
class RatePolicy:
    mode: RateMode = RateMode.PPS
    target: int = 0
    batch: int = DEFAULT_BATCH

    def __post_init__(self):
        if self.mode is not RateMode.UNLIMITED and self.target <= 0:
            raise ConfigError(f"Rate target must be positive, got {self.target}")
        if self.batch < 1:
            raise ConfigError(f"Batch size must be at least 1, got {self.batch}")

    @classmethod
    def pps(cls, target: int, batch: int = DEFAULT_BATCH) -> 'RatePolicy':
        return cls(RateMode.PPS, int(target), batch)

    @classmethod
    def bps(cls, target: int, batch: int = DEFAULT_BATCH) -> 'RatePolicy':
        return cls(RateMode.BPS, int(target), batch)

    @classmethod
    def unlimited(cls, batch: int = DEFAULT_BATCH) -> 'RatePolicy':
        return cls(RateMode.UNLIMITED, 0, batch)

    def describe(self) -> str:
        if self.mode is RateMode.UNLIMITED:
            return 'unlimited'
        return f"{self.target:,} {self.mode.value}"


def parse_bandwidth(text: str) -> int:
    """
    Parse a bandwidth like ``10M``, ``1.5G`` or ``800Kbps`` into bits/sec.

    Raises:
        ConfigError: on malformed input or a zero result
    """
    match = _BANDWIDTH_RE.match(text)
    if not match:
        raise ConfigError(f"Malformed bandwidth {text!r}; expected e.g. 100M or 1G")
    number, suffix = match.groups()
    bits = int(float(number) * _BANDWIDTH_SUFFIXES[suffix.upper()])
    if bits <= 0:
        raise ConfigError(f"Bandwidth {text!r} must be positive")
    return bits


def bps_to_pps(policy: RatePolicy, probe_bytes_on_wire: int) -> int:
    """
    Packets per second that fit a bandwidth target.

    Args:
        policy: a BPS policy
        probe_bytes_on_wire: frame size including the Ethernet header;
            preamble, inter-frame gap and FCS are added here

    Returns:
        floor(target / (8 * (probe_bytes + 24)))

    Raises:
        ConfigError: if not even one probe per second fits
    """
    if policy.mode is not RateMode.BPS:
        raise ConfigError(f"bps_to_pps needs a bps policy, got {policy.mode.value}")
    bits_per_probe = 8 * (probe_bytes_on_wire + ETHERNET_WIRE_OVERHEAD)
    pps = policy.target // bits_per_probe
    if pps == 0:
        raise ConfigError(
            f"Bandwidth {policy.target} bps is below one {probe_bytes_on_wire}-byte probe per second"
        )
    return pps


def effective_pps(policy: RatePolicy, probe_bytes_on_wire: int) -> Optional[int]:
    """Target packets/sec for any policy; None when unlimited."""
    if policy.mode is RateMode.UNLIMITED:
        return None
    if policy.mode is RateMode.BPS:
        return bps_to_pps(policy, probe_bytes_on_wire)
    return policy.target


@dataclass(frozen=True)
class Grant:
    permitted: int
    wait: float = 0.0


class TokenBucket:
    """
    Thread-safe token bucket in packets.

    Grants across all threads never exceed the tokens refilled since
    construction.
    """

    def __init__(self, policy: RatePolicy, clock=None, probe_bytes_on_wire: int = 0):
        self.policy = policy
        self.clock = clock or MonotonicClock()
        self.rate = effective_pps(policy, probe_bytes_on_wire)
        if self.rate is None:
            self.capacity = math.inf
        else:
            self.capacity = max(float(policy.batch), self.rate / 100.0)
        self.tokens = 0.0
        self.last_refill = self.clock.now()
        self.granted = 0
        self._lock = threading.Lock()

    @property
    def unlimited(self) -> bool:
        return self.rate is None

    def acquire(self, n: int) -> Grant:
        if n < 1:
            raise ValueError("Must request at least one token")
        if self.rate is None:
            with self._lock:
                self.granted += n
            return Grant(n)
        with self._lock:
            now = self.clock.now()
            elapsed = now - self.last_refill
            if elapsed > 0:
                self.tokens = min(self.capacity, self.tokens + elapsed * self.rate)
                self.last_refill = now
            permitted = min(n, int(self.tokens + _TOKEN_EPSILON))
            self.tokens -= permitted
            self.granted += permitted
            if permitted:
                return Grant(permitted)
            wanted = min(float(n), self.capacity)
            return Grant(0, max(_MIN_WAIT_SECS, (wanted - self.tokens) / self.rate))


def tokens_acquire(bucket: TokenBucket, n: int) -> Grant:
    """Take up to n tokens; a zero grant carries the wait until min(n, capacity) are available."""
    return bucket.acquire(n)
