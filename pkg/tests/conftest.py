"""
Shared fixtures: simulated clock, frame templates, scan secret, config and
simulated-network factories.
"""

import io
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from hexmap.address_space import Family, PortSet, parse_address, parse_target
from hexmap.clock import SimulatedClock
from hexmap.engine import ScanConfig
from hexmap.output import open_sink
from hexmap.packets.headers import FrameTemplate
from hexmap.probe_modules import get_probe_module
from hexmap.rate_control import RatePolicy
from hexmap.sim import harness_build, parse_rules
from hexmap.validation import ScanSecret

FIXTURES = Path(__file__).parent / 'fixtures'

SRC_V4 = '192.0.2.1'
SRC_V6 = '2001:db8::1'


def slow_trials(default: int) -> int:
    """Trial count for slow tests; HEXMAP_SLOW_TRIALS overrides the fast default."""
    value = os.environ.get('HEXMAP_SLOW_TRIALS', '').strip()
    return int(value) if value else default


def golden(name: str) -> bytes:
    return bytes.fromhex((FIXTURES / 'golden' / f'{name}.hex').read_text().strip())


@pytest.fixture
def clock():
    return SimulatedClock()


@pytest.fixture
def template_v4():
    return FrameTemplate(Family.V4, parse_address(SRC_V4, Family.V4))


@pytest.fixture
def template_v6():
    return FrameTemplate(Family.V6, parse_address(SRC_V6, Family.V6))


@pytest.fixture
def secret():
    return ScanSecret.from_seed(1234)


@pytest.fixture
def make_config(template_v4, template_v6):
    """Build a ScanConfig from a target expression and a few overrides."""

    def _make(expr, family=Family.V6, probe='icmp_echo', ports=None, probe_options=None, **overrides):
        family = Family.coerce(family)
        port_set = PortSet(tuple(ports)) if ports else PortSet.icmp()
        exprs = expr if isinstance(expr, (list, tuple)) else [expr]
        targets = tuple(parse_target(e, family, ports=port_set) for e in exprs)
        options = dict(
            targets=targets,
            probe=get_probe_module(probe, probe_options),
            template=template_v4 if family is Family.V4 else template_v6,
            rate=RatePolicy.unlimited(),
            seed=7,
            cooldown_secs=0.5,
        )
        options.update(overrides)
        return ScanConfig(**options).validate()

    return _make


@pytest.fixture
def make_harness():
    """Simulated network from rule text (or rule objects) sharing a fresh clock."""

    def _make(rules='', seed=0):
        if isinstance(rules, str):
            rules = parse_rules(rules)
        return harness_build(rules, seed=seed, clock=SimulatedClock())

    return _make


@pytest.fixture
def text_sink():
    """Open a sink on an in-memory buffer; returns (sink, buffer)."""

    def _make(fmt='txt', fields=None):
        buffer = io.StringIO()
        return open_sink(fmt, fields, buffer), buffer

    return _make
