"""
Full-Cycle Permutation
======================
Pseudorandom order over [0, n) from the multiplicative group mod a prime
p > n. Iterating ``x <- x * g mod p`` with a primitive root g visits every
residue in [1, p) once; residues above n are skipped, and residue r is
emitted as index r - 1.

Sharding strides the sequence of emitted indices: shard i of S emits
positions i, i + S, i + 2S, ... so shards are disjoint, cover [0, n) and
their quotas are the floor/ceil split of n.

Usage:
    params = make_cycle_params(n=2**16, seed=42)
    state = shard_init(params, Shard(0, 1))
    for index in iter_cycle(state):
        ...
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterator, Optional

from .errors import ConfigError
from .number_theory import factorize, is_primitive_root, next_prime

logger = logging.getLogger(__name__)


def seeded_int(seed: int, label: bytes, counter: int = 0) -> int:
    """128-bit value keyed by the scan seed; stable across platforms."""
    digest = hashlib.blake2b(
        label + counter.to_bytes(8, 'big'),
        digest_size=16,
        key=(seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, 'big'),
        person=b'hexmap-cycle',
    ).digest()
    return int.from_bytes(digest, 'big')


@dataclass(frozen=True)
class CycleParams:
    n: int
    p: int
    g: int
    seed: int
    start: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("Cycle needs n >= 1")
        if self.p <= self.n:
            raise ConfigError(f"Modulus {self.p} must exceed n={self.n}")
        if not 1 <= self.start <= self.p - 1:
            raise ConfigError(f"Start residue {self.start} outside [1, {self.p - 1}]")


@dataclass(frozen=True)
class Shard:
    shard_index: int = 0
    shard_count: int = 1

    def __post_init__(self):
        if self.shard_count < 1:
            raise ConfigError("Shard count must be >= 1")
        if not 0 <= self.shard_index < self.shard_count:
            raise ConfigError(
                f"Shard index {self.shard_index} outside [0, {self.shard_count})"
            )

    def split(self, parts: int, part: int) -> 'Shard':
        """Sub-shard ``part`` of ``parts`` inside this shard."""
        return Shard(self.shard_index + self.shard_count * part, self.shard_count * parts)


@dataclass
class CycleState:
    params: CycleParams
    current: int
    emitted: int
    limit: int
    shard: Shard


def find_prime(n: int) -> int:
    """Smallest prime p > n."""
    if n < 1:
        raise ConfigError("find_prime() needs n >= 1")
    return next_prime(n)


def find_generator(p: int, seed: int) -> int:
    """
    Pick a primitive root mod p as a deterministic function of seed.

    Candidates in [2, p - 2] are drawn from a seed-keyed hash stream and
    certified against every prime factor q of p - 1.
    """
    if p == 2:
        return 1
    if p == 3:
        return 2
    prime_factors = list(factorize(p - 1))
    counter = 0
    while True:
        g = 2 + seeded_int(seed, b'generator', counter) % (p - 3)
        if is_primitive_root(g, p, prime_factors):
            return g
        counter += 1


def make_cycle_params(n: int, seed: int) -> CycleParams:
    p = find_prime(n)
    g = find_generator(p, seed)
    start = 1 + seeded_int(seed, b'start') % (p - 1)
    logger.info(f"Cycle over n={n}: p={p}, g={g}")
    return CycleParams(n=n, p=p, g=g, seed=seed, start=start)


def shard_quota(n: int, shard: Shard) -> int:
    if shard.shard_index >= n:
        return 0
    return -(-(n - shard.shard_index) // shard.shard_count)


def shard_init(params: CycleParams, shard: Shard = Shard()) -> CycleState:
    """Cycle state emitting positions shard_index, shard_index + shard_count, ..."""
    return CycleState(
        params=params,
        current=params.start,
        emitted=0,
        limit=shard_quota(params.n, shard),
        shard=shard,
    )


def _next_valid(state: CycleState) -> int:
    params = state.params
    current = state.current
    n, g, p = params.n, params.g, params.p
    while True:
        current = current * g % p
        if current <= n:
            state.current = current
            return current


def cycle_next(state: CycleState) -> Optional[int]:
    """
    Next index of this shard, or None once its quota is exhausted.
    """
    if state.emitted >= state.limit:
        return None
    skip = state.shard.shard_index if state.emitted == 0 else state.shard.shard_count - 1
    for _ in range(skip):
        _next_valid(state)
    residue = _next_valid(state)
    state.emitted += 1
    return residue - 1


def iter_cycle(state: CycleState) -> Iterator[int]:
    while True:
        index = cycle_next(state)
        if index is None:
            return
        yield index
