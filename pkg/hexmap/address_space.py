"""
Target Address Space
====================
Parses target expressions and models the three-part address structure:
fixed prefix, randomized range and identifier suffix.

An expression ``ADDR/PLEN-RLO`` keeps bits [0, PLEN) of ADDR, randomizes
bits [PLEN, RLO) and fills bits [RLO, width) from the identifier policy.
Bits are numbered MSB-first. IPv4 lives in a 32-bit lane, IPv6 in 128.

Usage:
    spec = parse_target('2001:db8::/32-64', Family.V6,
                        identifier=IdentifierSpec.fixed(1))
    space_size(spec)                 # 2**32
    compose_address(spec, 1, 0)      # int for 2001:db8:0:1::1
"""

import enum
import hashlib
import ipaddress
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple, Union

from .errors import PortError, TargetError


class Family(enum.Enum):
    V4 = 'v4'
    V6 = 'v6'

    @property
    def width(self) -> int:
        return 32 if self is Family.V4 else 128

    @property
    def version(self) -> int:
        return 4 if self is Family.V4 else 6

    @classmethod
    def coerce(cls, value: Union['Family', str, int]) -> 'Family':
        if isinstance(value, Family):
            return value
        text = str(value).lower().lstrip('-')
        if text in ('v4', '4', 'ipv4'):
            return cls.V4
        if text in ('v6', '6', 'ipv6'):
            return cls.V6
        raise TargetError(f"Unknown address family: {value!r}")


def format_address(family: Family, value: int) -> str:
    """Render an integer address in dotted-quad or RFC 5952 form."""
    if family is Family.V4:
        return str(ipaddress.IPv4Address(value))
    return str(ipaddress.IPv6Address(value))


def parse_address(text: str, family: Family) -> int:
    """Parse a textual address of the given family into an integer."""
    try:
        addr = ipaddress.ip_address(text.strip())
    except ValueError as e:
        raise TargetError(f"Malformed address {text!r}: {e}") from None
    if addr.version != family.version:
        raise TargetError(
            f"Address {text!r} is IPv{addr.version}, expected IPv{family.version}"
        )
    return int(addr)


class IdentifierMode(enum.Enum):
    FIXED = 'fixed'
    PATTERN = 'pattern'
    RANDOM = 'random'


@dataclass(frozen=True)
class IdentifierSpec:
    """
    Policy for the identifier bits below the randomized range.

    fixed: every address carries ``value``; pattern: the scan visits every
    entry of ``pattern`` for every randomized index; random: each index gets
    a suffix drawn deterministically from ``rng_seed``.
    """

    mode: IdentifierMode = IdentifierMode.FIXED
    value: int = 0
    pattern: Tuple[int, ...] = ()
    rng_seed: int = 0

    @classmethod
    def fixed(cls, value: int) -> 'IdentifierSpec':
        return cls(mode=IdentifierMode.FIXED, value=value)

    @classmethod
    def from_pattern(cls, values: Sequence[int]) -> 'IdentifierSpec':
        values = tuple(values)
        if not values:
            raise TargetError("Identifier pattern must not be empty")
        if len(set(values)) != len(values):
            raise TargetError("Identifier pattern contains duplicates")
        return cls(mode=IdentifierMode.PATTERN, pattern=values)

    @classmethod
    def random(cls, rng_seed: int) -> 'IdentifierSpec':
        return cls(mode=IdentifierMode.RANDOM, rng_seed=rng_seed & 0xFFFFFFFFFFFFFFFF)

    @property
    def multiplicity(self) -> int:
        return len(self.pattern) if self.mode is IdentifierMode.PATTERN else 1

    def check_width(self, id_width: int):
        limit = 1 << id_width
        if self.mode is IdentifierMode.FIXED and not 0 <= self.value < limit:
            raise TargetError(
                f"Identifier {self.value:#x} does not fit in {id_width} identifier bits"
            )
        if self.mode is IdentifierMode.PATTERN:
            if not self.pattern:
                raise TargetError("Identifier pattern must not be empty")
            if len(set(self.pattern)) != len(self.pattern):
                raise TargetError("Identifier pattern contains duplicates")
            for value in self.pattern:
                if not 0 <= value < limit:
                    raise TargetError(
                        f"Identifier {value:#x} does not fit in {id_width} identifier bits"
                    )


@dataclass(frozen=True)
class PortSet:
    """Sorted, duplicate-free 16-bit ports. ``(0,)`` is the ICMP sentinel."""

    ports: Tuple[int, ...] = (0,)

    @classmethod
    def icmp(cls) -> 'PortSet':
        return cls((0,))

    @property
    def is_sentinel(self) -> bool:
        return self.ports == (0,)

    def __len__(self) -> int:
        return len(self.ports)

    def __iter__(self) -> Iterator[int]:
        return iter(self.ports)

    def __getitem__(self, i: int) -> int:
        return self.ports[i]


def parse_ports(expr: str) -> PortSet:
    """
    Expand a comma list of ports and inclusive ranges.

    Args:
        expr: e.g. ``"80,443,8000-8002"``

    Returns:
        PortSet sorted and deduplicated.
    """
    ports = set()
    for chunk in expr.split(','):
        chunk = chunk.strip()
        if not chunk:
            continue
        lo_text, sep, hi_text = chunk.partition('-')
        try:
            lo = int(lo_text)
            hi = int(hi_text) if sep else lo
        except ValueError:
            raise PortError(f"Malformed port entry {chunk!r}") from None
        if lo < 0 or hi < 0:
            raise PortError(f"Negative port in {chunk!r}")
        if lo > 65535 or hi > 65535:
            raise PortError(f"Port out of range in {chunk!r} (max 65535)")
        if hi < lo:
            raise PortError(f"Inverted port range {chunk!r}")
        ports.update(range(lo, hi + 1))
    if not ports:
        raise PortError(f"Port expression {expr!r} expands to nothing")
    return PortSet(tuple(sorted(ports)))


@dataclass(frozen=True)
class TargetSpec:
    """
    One scan universe.

    ``random_hi`` equals ``prefix_len``: the randomized range is
    [prefix_len, random_lo).
    """

    family: Family
    base: int
    prefix_len: int
    random_lo: int
    identifier: IdentifierSpec = field(default_factory=IdentifierSpec)
    ports: PortSet = field(default_factory=PortSet.icmp)

    def __post_init__(self):
        width = self.family.width
        if not 0 <= self.prefix_len <= self.random_lo <= width:
            raise TargetError(
                f"Need 0 <= prefix_len ({self.prefix_len}) <= random_lo "
                f"({self.random_lo}) <= {width}"
            )
        if not 0 <= self.base < (1 << width):
            raise TargetError(f"Base address does not fit in {width} bits")
        self.identifier.check_width(self.id_width)
        if not len(self.ports):
            raise TargetError("Port set must not be empty")

    @property
    def address_width(self) -> int:
        return self.family.width

    @property
    def random_hi(self) -> int:
        return self.prefix_len

    @property
    def width(self) -> int:
        """Number of randomized bits."""
        return self.random_lo - self.prefix_len

    @property
    def id_width(self) -> int:
        return self.family.width - self.random_lo

    @property
    def prefix_bits(self) -> int:
        shift = self.family.width - self.prefix_len
        return (self.base >> shift) << shift if self.prefix_len else 0

    def describe(self) -> str:
        return f"{format_address(self.family, self.base)}/{self.prefix_len}-{self.random_lo}"


def parse_target(expr: str, family: Union[Family, str],
                 identifier: Optional[IdentifierSpec] = None,
                 ports: Optional[PortSet] = None) -> TargetSpec:
    """
    Parse ``ADDR``, ``ADDR/PLEN`` or ``ADDR/PLEN-RLO``.

    When RLO is omitted the whole host part is randomized; when PLEN is
    omitted the expression names a single address. Without an explicit
    identifier policy the identifier bits of ADDR itself are kept.
    """
    family = Family.coerce(family)
    width = family.width
    text = expr.strip()
    addr_text, slash, range_text = text.partition('/')
    base = parse_address(addr_text, family)

    if not slash:
        prefix_len = random_lo = width
    else:
        plen_text, dash, rlo_text = range_text.partition('-')
        try:
            prefix_len = int(plen_text)
            random_lo = int(rlo_text) if dash else width
        except ValueError:
            raise TargetError(f"Malformed bit range in {expr!r}") from None
        if prefix_len < 0 or prefix_len > width:
            raise TargetError(f"Prefix length {prefix_len} outside [0, {width}] in {expr!r}")
        if random_lo > width:
            raise TargetError(f"Range end {random_lo} exceeds address width {width} in {expr!r}")
        if prefix_len > random_lo:
            raise TargetError(f"Prefix length {prefix_len} exceeds range end {random_lo} in {expr!r}")

    if identifier is None:
        id_width = width - random_lo
        identifier = IdentifierSpec.fixed(base & ((1 << id_width) - 1))
    return TargetSpec(
        family=family,
        base=base,
        prefix_len=prefix_len,
        random_lo=random_lo,
        identifier=identifier,
        ports=ports if ports is not None else PortSet.icmp(),
    )


def parse_identifier_value(text: str, family: Union[Family, str]) -> int:
    """
    Parse an identifier given as address suffix notation or an integer.

    ``::1`` and ``0.0.0.1`` both mean 1; ``0x1a`` and ``26`` are integers.
    """
    family = Family.coerce(family)
    text = text.strip()
    if ':' in text or text.count('.') == 3:
        return parse_address(text, family)
    try:
        return int(text, 0)
    except ValueError:
        raise TargetError(f"Malformed identifier {text!r}") from None


def space_size(spec: TargetSpec) -> int:
    """Probes in the universe: 2**w * identifier multiplicity * |ports|."""
    return (1 << spec.width) * spec.identifier.multiplicity * len(spec.ports)


def random_identifier(rng_seed: int, index: int, id_width: int) -> int:
    """Deterministic identifier suffix for one randomized index."""
    if id_width == 0:
        return 0
    digest = hashlib.blake2b(
        index.to_bytes(17, 'big'),
        digest_size=16,
        key=rng_seed.to_bytes(8, 'big'),
        person=b'hexmap-ident',
    ).digest()
    return int.from_bytes(digest, 'big') & ((1 << id_width) - 1)


def identifier_choice(spec: TargetSpec, index: int, slot: int) -> int:
    """
    The ``id_choice`` to pass to compose_address for one identifier slot.

    fixed: 0; pattern: the slot itself; random: the drawn suffix.
    """
    mode = spec.identifier.mode
    if mode is IdentifierMode.PATTERN:
        return slot
    if mode is IdentifierMode.RANDOM:
        return random_identifier(spec.identifier.rng_seed, index, spec.id_width)
    return 0


def compose_address(spec: TargetSpec, index: int, id_choice: int = 0) -> int:
    """
    Build prefix bits | index | identifier bits.

    Args:
        spec: target universe
        index: value placed MSB-first in [prefix_len, random_lo)
        id_choice: 0 for fixed identifiers, the pattern slot in pattern
            mode, the raw suffix value in random mode

    Returns:
        The address as an integer of the family's width.
    """
    if not 0 <= index < (1 << spec.width):
        raise TargetError(f"Index {index} outside [0, 2**{spec.width})")
    ident = spec.identifier
    if ident.mode is IdentifierMode.PATTERN:
        if not 0 <= id_choice < len(ident.pattern):
            raise TargetError(f"Pattern slot {id_choice} outside [0, {len(ident.pattern)})")
        suffix = ident.pattern[id_choice]
    elif ident.mode is IdentifierMode.RANDOM:
        if not 0 <= id_choice < (1 << spec.id_width):
            raise TargetError(f"Identifier {id_choice:#x} does not fit in {spec.id_width} bits")
        suffix = id_choice
    else:
        suffix = ident.value
    return spec.prefix_bits | (index << spec.id_width) | suffix


def decompose_address(spec: TargetSpec, address: int) -> Tuple[int, int]:
    """Inverse of compose_address: recover ``(index, id_choice)``."""
    id_width = spec.id_width
    shift = spec.family.width - spec.prefix_len
    if spec.prefix_len and (address >> shift) != (spec.base >> shift):
        raise TargetError("Address lies outside the target prefix")
    index = (address >> id_width) & ((1 << spec.width) - 1)
    suffix = address & ((1 << id_width) - 1)
    ident = spec.identifier
    if ident.mode is IdentifierMode.PATTERN:
        try:
            return index, ident.pattern.index(suffix)
        except ValueError:
            raise TargetError(f"Suffix {suffix:#x} is not in the identifier pattern") from None
    if ident.mode is IdentifierMode.RANDOM:
        return index, suffix
    if suffix != ident.value:
        raise TargetError(f"Suffix {suffix:#x} differs from the fixed identifier")
    return index, 0


def probe_tuple(spec: TargetSpec, index: int) -> Tuple[int, int]:
    """
    Map a permutation index onto ``(address, port)``.

    The index is decomposed mixed-radix as port (fastest), identifier slot,
    then randomized address index, so ports and identifiers share the single
    permutation with addresses.
    """
    ports = spec.ports.ports
    index, port_slot = divmod(index, len(ports))
    addr_index, id_slot = divmod(index, spec.identifier.multiplicity)
    address = compose_address(spec, addr_index, identifier_choice(spec, addr_index, id_slot))
    return address, ports[port_slot]
