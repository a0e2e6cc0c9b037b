"""
Allowlist / Blocklist Filtering
===============================
Binary trie over address bits with longest-prefix-match lookups.

Rules:
- the longest matching prefix decides, whichever list it came from
- the same prefix in both lists is blocked
- with no match: allow, unless an allowlist was loaded

Usage:
    prefix_filter = build_filter(Family.V6, blocklists=['blocklist.txt'])
    if prefix_filter.is_allowed(addr): ...
    excluded = count_excluded(spec, prefix_filter)
"""

import ipaddress
import logging
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

from .address_space import Family, IdentifierMode, TargetSpec, random_identifier
from .errors import FilterError

logger = logging.getLogger(__name__)


class _Node:
    __slots__ = ('children', 'allow')

    def __init__(self):
        self.children = [None, None]
        self.allow: Optional[bool] = None

    @property
    def is_leaf(self) -> bool:
        return self.children[0] is None and self.children[1] is None


class PrefixFilter:
    """
    Longest-prefix-match filter for one address family.

    Read-only once frozen; lookups from several sender threads need no lock.
    """

    def __init__(self, family: Optional[Family] = None, default_allow: bool = True):
        self.family = family
        self.default_allow = default_allow
        self.root = _Node()
        self.prefix_count = 0
        self.frozen = False

    def insert(self, network: int, prefix_len: int, allow: bool):
        if self.frozen:
            raise FilterError("Filter is frozen")
        width = self.family.width
        node = self.root
        for depth in range(prefix_len):
            bit = (network >> (width - 1 - depth)) & 1
            if node.children[bit] is None:
                node.children[bit] = _Node()
            node = node.children[bit]
        if node.allow is None:
            self.prefix_count += 1
            node.allow = allow
        else:
            node.allow = node.allow and allow

    def freeze(self) -> 'PrefixFilter':
        self.frozen = True
        return self

    def is_allowed(self, addr: int) -> bool:
        allowed = self.default_allow
        node = self.root
        if self.family is None:
            return allowed
        shift = self.family.width - 1
        while node is not None:
            if node.allow is not None:
                allowed = node.allow
            if shift < 0:
                break
            node = node.children[(addr >> shift) & 1]
            shift -= 1
        return allowed

    def __len__(self) -> int:
        return self.prefix_count

    def __repr__(self) -> str:
        family = self.family.value if self.family else '-'
        default = 'allow' if self.default_allow else 'block'
        return f"PrefixFilter({family}, {self.prefix_count} prefixes, default={default})"


def _parse_line(text: str, line_number: int):
    try:
        return ipaddress.ip_network(text, strict=False)
    except ValueError:
        raise FilterError(f"Malformed CIDR {text!r}", line_number) from None


def load_prefixes(lines: Union[str, Iterable[str]], allow: bool = False,
                  prefix_filter: Optional[PrefixFilter] = None) -> PrefixFilter:
    """
    Load one CIDR per line into a filter.

    Args:
        lines: file contents or an iterable of lines; ``#`` starts a comment
        allow: True for allowlist entries, False for blocklist entries
        prefix_filter: filter to extend; a new allow-by-default one if omitted

    Returns:
        The filter (not frozen).

    Raises:
        FilterError: malformed CIDR, or a family different from earlier lines
    """
    if isinstance(lines, str):
        lines = lines.splitlines()
    if prefix_filter is None:
        prefix_filter = PrefixFilter()
    for line_number, raw in enumerate(lines, start=1):
        text = raw.split('#', 1)[0].strip()
        if not text:
            continue
        network = _parse_line(text, line_number)
        family = Family.V4 if network.version == 4 else Family.V6
        if prefix_filter.family is None:
            prefix_filter.family = family
        elif prefix_filter.family is not family:
            raise FilterError(
                f"{text} is {family.value} but the list is {prefix_filter.family.value}",
                line_number,
            )
        prefix_filter.insert(int(network.network_address), network.prefixlen, allow)
    return prefix_filter


def _read_list(path: Union[str, Path]) -> Sequence[str]:
    try:
        return Path(path).read_text().splitlines()
    except OSError as e:
        raise FilterError(f"Cannot read prefix list {path}: {e}") from e


def build_filter(family: Union[Family, str],
                 blocklists: Sequence[Union[str, Path]] = (),
                 allowlists: Sequence[Union[str, Path]] = ()) -> PrefixFilter:
    """
    Combine prefix list files into one frozen filter for a family.

    Files of the other family are skipped with a warning. The default policy
    is block as soon as any allowlist is named.
    """
    family = Family.coerce(family)
    combined = PrefixFilter(family, default_allow=not allowlists)
    for paths, allow in ((blocklists, False), (allowlists, True)):
        for path in paths:
            try:
                scratch = load_prefixes(_read_list(path), allow=allow)
            except FilterError as e:
                raise FilterError(f"{path}: {e}") from None
            if scratch.family is not None and scratch.family is not family:
                logger.warning(f"Ignoring {scratch.family.value} prefix list {path} for a {family.value} scan")
                continue
            load_prefixes(_read_list(path), allow=allow, prefix_filter=combined)
            logger.info(f"Loaded {len(scratch)} {'allow' if allow else 'block'} prefixes from {path}")
    return combined.freeze()


def is_allowed(prefix_filter: Optional[PrefixFilter], addr: int) -> bool:
    if prefix_filter is None:
        return True
    return prefix_filter.is_allowed(addr)


def _count_blocked(spec: TargetSpec, prefix_filter: PrefixFilter,
                   suffix_of: Callable[[int], int]) -> int:
    """Blocked addresses for one identifier stream, by walking trie and spec together."""
    width = spec.address_width
    plen = spec.prefix_len
    rlo = spec.random_lo
    base = spec.base

    def remaining(depth: int) -> int:
        return 1 << (rlo - max(min(depth, rlo), plen))

    def walk(node: _Node, depth: int, allowed: bool, index: int) -> int:
        if node.allow is not None:
            allowed = node.allow
        if node.is_leaf:
            return 0 if allowed else remaining(depth)
        if depth < plen:
            bit = (base >> (width - 1 - depth)) & 1
        elif depth < rlo:
            total = 0
            for bit in (0, 1):
                child = node.children[bit]
                if child is None:
                    total += 0 if allowed else remaining(depth + 1)
                else:
                    total += walk(child, depth + 1, allowed, (index << 1) | bit)
            return total
        else:
            bit = (suffix_of(index) >> (width - 1 - depth)) & 1
        child = node.children[bit]
        if child is None:
            return 0 if allowed else remaining(depth + 1)
        return walk(child, depth + 1, allowed, index)

    return walk(prefix_filter.root, 0, prefix_filter.default_allow, 0)


def count_excluded(spec: TargetSpec, prefix_filter: Optional[PrefixFilter]) -> int:
    """
    Composed addresses of the spec's universe that the filter blocks.

    Counts addresses (index x identifier slot), not probes: multiply by the
    port count for excluded probes. Computed without enumerating the space;
    results are cached only for frozen filters.
    """
    if prefix_filter is None or prefix_filter.frozen:
        return _count_excluded_frozen(spec, prefix_filter)
    return _count_excluded(spec, prefix_filter)


def _count_excluded(spec: TargetSpec, prefix_filter: Optional[PrefixFilter]) -> int:
    if prefix_filter is None or prefix_filter.family is None:
        if prefix_filter is not None and not prefix_filter.default_allow:
            return (1 << spec.width) * spec.identifier.multiplicity
        return 0
    if prefix_filter.family is not spec.family:
        raise FilterError(
            f"Filter family {prefix_filter.family.value} does not match target {spec.family.value}"
        )
    ident = spec.identifier
    if ident.mode is IdentifierMode.PATTERN:
        return sum(_count_blocked(spec, prefix_filter, lambda _i, s=s: s) for s in ident.pattern)
    if ident.mode is IdentifierMode.RANDOM:
        id_width = spec.id_width

        @lru_cache(maxsize=4096)
        def suffix_of(index: int) -> int:
            return random_identifier(ident.rng_seed, index, id_width)

        return _count_blocked(spec, prefix_filter, suffix_of)
    return _count_blocked(spec, prefix_filter, lambda _i: ident.value)


_count_excluded_frozen = lru_cache(maxsize=64)(_count_excluded)
