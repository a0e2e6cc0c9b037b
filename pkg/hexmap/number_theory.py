"""
Number theory helpers for the cycle permutation.

Deterministic primality (strong Miller-Rabin with fixed bases below
3.3e24, strong BPSW above), factorization by trial division against a
numpy sieve followed by Brent's Pollard-rho, and primitive-root checks.
"""

import logging
from functools import lru_cache
from typing import Dict, List, Optional

import gmpy2
import numpy as np

from .errors import FactorizationError

logger = logging.getLogger(__name__)

TRIAL_DIVISION_LIMIT = 1_000_000

# Strong MR with the first 13 primes as bases is exact below this bound.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_MR_EXACT_BOUND = 3_317_044_064_679_887_385_961_981

_RHO_ATTEMPTS = 64
_RHO_MAX_ITERATIONS = 1 << 22


@lru_cache(maxsize=1)
def small_primes(limit: int = TRIAL_DIVISION_LIMIT) -> List[int]:
    """All primes <= limit (sieve of Eratosthenes)."""
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for i in range(2, int(limit ** 0.5) + 1):
        if sieve[i]:
            sieve[i * i::i] = False
    return np.flatnonzero(sieve).tolist()


def is_prime(n: int) -> bool:
    """Deterministic primality test for arbitrary-size integers."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n == p:
            return True
        if n % p == 0:
            return False
    if n < _MR_EXACT_BOUND:
        return all(gmpy2.is_strong_prp(n, a) for a in _MR_BASES)
    return bool(gmpy2.is_strong_bpsw_prp(n))


def next_prime(n: int) -> int:
    """Smallest prime strictly greater than n."""
    if n < 2:
        return 2
    candidate = n + 1 if n % 2 == 0 else n + 2
    while not is_prime(candidate):
        candidate += 2
    return candidate


def pollard_brent(n: int, c: int, max_iterations: int = _RHO_MAX_ITERATIONS) -> Optional[int]:
    """
    Brent's variant of Pollard-rho with f(x) = x^2 + c mod n.

    Returns:
        A non-trivial factor of n, or None if this c failed.
    """
    if n % 2 == 0:
        return 2
    n = gmpy2.mpz(n)
    y, m, g, r, q = gmpy2.mpz(2), 128, gmpy2.mpz(1), 1, gmpy2.mpz(1)
    x = ys = y
    iterations = 0
    while g == 1:
        x = y
        for _ in range(r):
            y = (y * y + c) % n
        k = 0
        while k < r and g == 1:
            ys = y
            for _ in range(min(m, r - k)):
                y = (y * y + c) % n
                q = q * abs(x - y) % n
            g = gmpy2.gcd(q, n)
            k += m
        r *= 2
        iterations += r
        if iterations > max_iterations:
            return None
    if g == n:
        # Batched gcd overshot: walk back one step at a time.
        while True:
            ys = (ys * ys + c) % n
            g = gmpy2.gcd(abs(x - ys), n)
            if g > 1:
                break
    if g == n:
        return None
    return int(g)


def _split(n: int, factors: Dict[int, int]):
    if n == 1:
        return
    if is_prime(n):
        factors[n] = factors.get(n, 0) + 1
        return
    for c in range(1, _RHO_ATTEMPTS + 1):
        d = pollard_brent(n, c)
        if d is not None:
            _split(d, factors)
            _split(n // d, factors)
            return
    raise FactorizationError(f"Pollard-rho failed to split a {n.bit_length()}-bit cofactor")


def factorize(n: int) -> Dict[int, int]:
    """
    Prime factorization of n as ``{prime: exponent}``.

    Trial division up to TRIAL_DIVISION_LIMIT, Pollard-rho for the rest.
    """
    if n < 1:
        raise ValueError("factorize() needs n >= 1")
    factors: Dict[int, int] = {}
    remaining = n
    for p in small_primes():
        if p * p > remaining:
            break
        while remaining % p == 0:
            factors[p] = factors.get(p, 0) + 1
            remaining //= p
    if remaining > 1:
        _split(remaining, factors)
    return dict(sorted(factors.items()))


def is_primitive_root(g: int, p: int, prime_factors) -> bool:
    """True if g generates the multiplicative group mod prime p."""
    if p == 2:
        return g % 2 == 1
    if g % p == 0:
        return False
    return all(gmpy2.powmod(g, (p - 1) // q, p) != 1 for q in prime_factors)
