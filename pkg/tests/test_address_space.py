"""
Tests for target expressions, identifiers, ports and address composition.
"""

import random

import pytest

from hexmap.address_space import (
    Family, IdentifierMode, IdentifierSpec, PortSet, compose_address, decompose_address,
    format_address, identifier_choice, parse_address, parse_identifier_value, parse_ports,
    parse_target, probe_tuple, space_size,
)
from hexmap.errors import PortError, TargetError


def v6(text):
    return parse_address(text, Family.V6)


def v4(text):
    return parse_address(text, Family.V4)


# =============================================================================
# Target parsing
# =============================================================================

class TestParseTarget:
    """Tests for ADDR, ADDR/PLEN and ADDR/PLEN-RLO."""

    def test_v6_range(self):
        spec = parse_target('2001:db8::/32-64', Family.V6)
        assert spec.prefix_len == 32
        assert spec.random_lo == 64
        assert spec.width == 32

    def test_v4_range(self):
        spec = parse_target('192.168.0.1/16-20', 'v4')
        assert (spec.prefix_len, spec.random_lo, spec.width) == (16, 20, 4)

    def test_single_address(self):
        spec = parse_target('10.0.0.1/32', Family.V4)
        assert spec.width == 0
        assert space_size(spec) == 1

    def test_plain_address_is_single(self):
        spec = parse_target('10.0.0.1', Family.V4)
        assert spec.prefix_len == spec.random_lo == 32

    def test_rlo_defaults_to_width(self):
        spec = parse_target('10.0.0.0/8', Family.V4)
        assert (spec.prefix_len, spec.random_lo, spec.width) == (8, 32, 24)

    def test_default_identifier_keeps_address_suffix(self):
        spec = parse_target('192.168.0.1/16-20', Family.V4)
        assert spec.identifier.mode is IdentifierMode.FIXED
        assert spec.identifier.value == 1
        assert format_address(Family.V4, compose_address(spec, 0)) == '192.168.0.1'

    @pytest.mark.parametrize('expr,family', [
        ('2001:db8::/64-32', Family.V6),
        ('10.0.0.0/8-33', Family.V4),
        ('10.0.0.0/40', Family.V4),
        ('2001:db8::/32-64', Family.V4),
        ('10.0.0.0/16', Family.V6),
        ('10.0.0.256/16', Family.V4),
        ('10.0.0.0/x-12', Family.V4),
    ])
    def test_rejects_malformed(self, expr, family):
        with pytest.raises(TargetError):
            parse_target(expr, family)

    def test_identifier_must_fit(self):
        with pytest.raises(TargetError):
            parse_target('10.0.0.0/8-24', Family.V4, identifier=IdentifierSpec.fixed(256))


class TestSpaceSize:
    """Tests for space_size()."""

    def test_width_only(self):
        spec = parse_target('2001:db8::/32-64', Family.V6, identifier=IdentifierSpec.fixed(1))
        assert space_size(spec) == 2 ** 32

    def test_ports_multiply(self):
        spec = parse_target('192.168.0.1/16-20', Family.V4, ports=parse_ports('22,80,443'))
        assert space_size(spec) == 48
        tuples = {probe_tuple(spec, i) for i in range(48)}
        assert len(tuples) == 48

    def test_single_v6(self):
        assert space_size(parse_target('2001:db8::1/128', Family.V6)) == 1

    def test_pattern_multiplies(self):
        spec = parse_target('2001:db8::/48-56', Family.V6,
                            identifier=IdentifierSpec.from_pattern([1, 2, 3]))
        assert space_size(spec) == 256 * 3


# =============================================================================
# Composition
# =============================================================================

class TestComposeAddress:
    """Tests for prefix | index | identifier composition."""

    def test_v6_index_one(self):
        spec = parse_target('2001:db8::/32-64', Family.V6,
                            identifier=IdentifierSpec.fixed(parse_identifier_value('::1', 'v6')))
        assert compose_address(spec, 1) == v6('2001:db8:0:1::1')

    def test_zero_index_is_base(self):
        spec = parse_target('2001:db8::/32-64', Family.V6, identifier=IdentifierSpec.fixed(0))
        assert compose_address(spec, 0) == v6('2001:db8::')

    def test_v4_msb_first(self):
        spec = parse_target('192.168.0.0/16-20', Family.V4)
        assert format_address(Family.V4, compose_address(spec, 0b1010)) == '192.168.160.0'

    def test_index_out_of_range(self):
        spec = parse_target('192.168.0.0/16-20', Family.V4)
        with pytest.raises(TargetError):
            compose_address(spec, 16)

    def test_matches_naive_listing(self):
        spec = parse_target('10.0.0.0/30', Family.V4)
        composed = sorted(format_address(Family.V4, compose_address(spec, i)) for i in range(4))
        assert composed == ['10.0.0.0', '10.0.0.1', '10.0.0.2', '10.0.0.3']

    def test_pattern_slots(self):
        spec = parse_target('2001:db8::/56-64', Family.V6,
                            identifier=IdentifierSpec.from_pattern([1, 2]))
        assert compose_address(spec, 3, 1) == v6('2001:db8:0:3::2')

    def test_random_identifier_is_deterministic(self):
        spec = parse_target('2001:db8::/48-64', Family.V6, identifier=IdentifierSpec.random(99))
        first = [compose_address(spec, i, identifier_choice(spec, i, 0)) for i in range(32)]
        again = [compose_address(spec, i, identifier_choice(spec, i, 0)) for i in range(32)]
        assert first == again
        assert len({a & ((1 << 64) - 1) for a in first}) > 1


class TestCompositionProperties:
    """Round-trip, injectivity and bit placement over random specs."""

    def _random_spec(self, rng, max_width=16):
        family = rng.choice([Family.V4, Family.V6])
        width = family.width
        w = rng.randint(0, max_width)
        prefix_len = rng.randint(0, width - w)
        random_lo = prefix_len + w
        base = rng.getrandbits(width)
        id_width = width - random_lo
        mode = rng.choice(['fixed', 'pattern', 'random'])
        if mode == 'pattern' and id_width >= 2:
            values = rng.sample(range(1 << min(id_width, 16)), 2)
            ident = IdentifierSpec.from_pattern(values)
        elif mode == 'random':
            ident = IdentifierSpec.random(rng.getrandbits(64))
        else:
            ident = IdentifierSpec.fixed(rng.getrandbits(id_width) if id_width else 0)
        text = f"{format_address(family, base)}/{prefix_len}-{random_lo}"
        return parse_target(text, family, identifier=ident)

    def test_round_trip(self):
        rng = random.Random(5)
        for _ in range(200):
            spec = self._random_spec(rng, max_width=24)
            index = rng.getrandbits(spec.width) if spec.width else 0
            slot = rng.randrange(spec.identifier.multiplicity)
            id_choice = identifier_choice(spec, index, slot)
            assert decompose_address(spec, compose_address(spec, index, id_choice)) == (index, id_choice)

    def test_injective(self):
        rng = random.Random(11)
        for _ in range(20):
            spec = self._random_spec(rng, max_width=8)
            addresses = {
                compose_address(spec, i, identifier_choice(spec, i, s))
                for i in range(1 << spec.width)
                for s in range(spec.identifier.multiplicity)
            }
            assert len(addresses) == space_size(spec) // len(spec.ports)

    def test_increment_touches_only_randomized_bits(self):
        rng = random.Random(3)
        for _ in range(100):
            spec = self._random_spec(rng)
            if spec.width == 0 or spec.identifier.mode is IdentifierMode.RANDOM:
                continue
            width = spec.family.width
            mask = ((1 << spec.width) - 1) << (width - spec.random_lo)
            index = rng.randrange((1 << spec.width) - 1)
            delta = compose_address(spec, index) ^ compose_address(spec, index + 1)
            assert delta and delta & ~mask == 0

    def test_prefix_preserved(self):
        spec = parse_target('203.0.113.77/24-28', Family.V4)
        for i in range(16):
            assert compose_address(spec, i) >> 8 == v4('203.0.113.0') >> 8


# =============================================================================
# Ports and identifiers
# =============================================================================

class TestParsePorts:
    """Tests for parse_ports()."""

    def test_list_and_range(self):
        assert parse_ports('80,443,8000-8002').ports == (80, 443, 8000, 8001, 8002)

    def test_single(self):
        assert parse_ports('53').ports == (53,)

    def test_dedup(self):
        assert parse_ports('80,80-81').ports == (80, 81)

    @pytest.mark.parametrize('expr', ['70000', '90-80', '', ',', 'http', '-1'])
    def test_rejects(self, expr):
        with pytest.raises(PortError):
            parse_ports(expr)

    def test_icmp_sentinel(self):
        assert PortSet.icmp().is_sentinel
        assert not parse_ports('80').is_sentinel


class TestIdentifiers:
    """Tests for identifier parsing and pattern validation."""

    @pytest.mark.parametrize('text,family,expected', [
        ('::1', 'v6', 1),
        ('0.0.0.1', 'v4', 1),
        ('0x1a', 'v6', 26),
        ('26', 'v4', 26),
    ])
    def test_parse_identifier_value(self, text, family, expected):
        assert parse_identifier_value(text, family) == expected

    def test_pattern_rejects_duplicates(self):
        with pytest.raises(TargetError):
            IdentifierSpec.from_pattern([1, 1])

    def test_pattern_rejects_empty(self):
        with pytest.raises(TargetError):
            IdentifierSpec.from_pattern([])
