"""
Tests for the simulated network: rule parsing, reply generation, timing and
forgery injection.
"""

import io

import pandas as pd
import pytest

from hexmap.address_space import Family, IdentifierSpec, parse_address, parse_target
from hexmap.engine import ScanConfig, run_scan
from hexmap.errors import ConfigError
from hexmap.output import close_sink
from hexmap.packets import build_ethernet, build_icmp_echo, build_tcp_syn, parse_reply
from hexmap.packets.parse import ReplyKind
from hexmap.probe_modules import get_probe_module
from hexmap.rate_control import RatePolicy
from hexmap.sim import Behavior, harness_build, inject_forgeries, load_rules, parse_rules
from hexmap.sim.harness import probe_type_of
from hexmap.sim.rules import first_match
from hexmap.validation import ProbeType

from conftest import FIXTURES

V6 = Family.V6


def v6(text):
    return parse_address(text, V6)


class TestRules:
    """Tests for the rule text format and matching."""

    def test_parse(self):
        rules = parse_rules("""
            # comment
            dst=2001:db8::/112 suffix=0x01/8 -> echo_reply latency=5 loss=0.1
            port=80,443 type=tcp_syn -> syn_ack latency=1-20
            type=dns -> dns_answer rcode=nxdomain records=192.0.2.7,192.0.2.8
            * -> silent
        """)
        assert [r.behavior for r in rules] == [Behavior.ECHO_REPLY, Behavior.SYN_ACK,
                                               Behavior.DNS_ANSWER, Behavior.SILENT]
        assert rules[0].latency_ms == (5.0, 5.0)
        assert rules[0].loss == 0.1
        assert (rules[0].suffix_bits, rules[0].suffix_value) == (8, 1)
        assert rules[1].ports == {80, 443}
        assert rules[1].latency_ms == (1.0, 20.0)
        assert rules[2].rcode == 3
        assert rules[2].records == ('192.0.2.7', '192.0.2.8')

    @pytest.mark.parametrize('text,line', [
        ('* -> echo_reply\n* -> dance', 2),
        ('\n\nport=80', 3),
        ('color=red -> silent', 1),
        ('* -> echo_reply loss=2', 1),
        ('* -> icmp_error error=unreach_moon', 1),
        ('type=gopher -> silent', 1),
    ])
    def test_errors_name_the_line(self, text, line):
        with pytest.raises(ConfigError, match=f'line {line}'):
            parse_rules(text)

    def test_first_match_wins(self):
        rules = parse_rules("""
            dst=2001:db8::/120 -> icmp_error error=unreach_admin
            dst=2001:db8::/112 -> echo_reply
        """)
        hit = first_match(rules, V6, v6('2001:db8::5'), 0, ProbeType.ICMP_ECHO)
        assert hit.behavior is Behavior.ICMP_ERROR
        hit = first_match(rules, V6, v6('2001:db8::105'), 0, ProbeType.ICMP_ECHO)
        assert hit.behavior is Behavior.ECHO_REPLY
        assert first_match(rules, V6, v6('2001:db9::1'), 0, ProbeType.ICMP_ECHO) is None

    def test_matching_terms(self):
        rule = parse_rules('dst=10.0.0.0/8 port=22 type=tcp_syn -> rst')[0]
        dst = parse_address('10.1.1.1', Family.V4)
        assert rule.matches(Family.V4, dst, 22, ProbeType.TCP_SYN)
        assert not rule.matches(Family.V4, dst, 23, ProbeType.TCP_SYN)
        assert not rule.matches(Family.V4, dst, 22, ProbeType.UDP)
        assert not rule.matches(V6, dst, 22, ProbeType.TCP_SYN)

    def test_load_fixture(self):
        rules = load_rules(FIXTURES / 'rules' / 'periphery.rules')
        assert len(rules) == 3
        assert rules[1].error_source == v6('2001:db8:100::ffff')


class TestSimTransport:
    """Tests for reply generation and delivery timing."""

    def test_log_and_latency(self, make_harness, template_v6):
        harness = make_harness('* -> echo_reply latency=100')
        dst = v6('2001:db8::7')
        harness.transport.send(build_ethernet(template_v6, build_icmp_echo(template_v6, dst, 3, 4)))
        assert harness.log.tuples() == [(dst, 0)]
        assert harness.log.records[0].probe_type is ProbeType.ICMP_ECHO
        assert harness.transport.receive(0) is None
        harness.clock.advance(0.1)
        view = parse_reply(harness.transport.receive(0))
        assert view.kind is ReplyKind.ICMP_ECHO_REPLY
        assert (view.src, view.icmp_id, view.icmp_seq) == (dst, 3, 4)

    def test_silent_and_unmatched(self, make_harness, template_v6):
        harness = make_harness('dst=2001:db8:1::/48 -> echo_reply')
        harness.transport.send(build_ethernet(template_v6, build_icmp_echo(template_v6, v6('2001:db8:2::1'), 1, 1)))
        assert len(harness.log) == 1
        assert harness.transport.pending == 0

    def test_synack_acknowledges(self, make_harness, template_v4):
        harness = make_harness('* -> syn_ack')
        dst = parse_address('192.0.2.80', Family.V4)
        harness.transport.send(build_ethernet(template_v4, build_tcp_syn(template_v4, dst, 40001, 80, 1000)))
        view = parse_reply(harness.transport.receive(0))
        assert view.tcp_flag_names == {'SYN', 'ACK'}
        assert (view.sport, view.dport, view.tcp_ack) == (80, 40001, 1001)

    def test_error_quotes_probe(self, make_harness, template_v6):
        harness = make_harness('* -> icmp_error error=time_exceeded error_source=2001:db8::fe')
        dst = v6('2001:db8::7')
        harness.transport.send(build_ethernet(template_v6, build_icmp_echo(template_v6, dst, 9, 9)))
        view = parse_reply(harness.transport.receive(0))
        assert view.error_subtype == 'time_exceeded'
        assert view.src == v6('2001:db8::fe')
        assert view.inner.dst == dst

    def test_loss_is_reproducible(self, make_harness, template_v6):
        lost = []
        for _ in range(2):
            harness = make_harness('* -> echo_reply loss=0.3', seed=42)
            for i in range(500):
                probe = build_icmp_echo(template_v6, v6('2001:db8::') + i, i, i)
                harness.transport.send(build_ethernet(template_v6, probe))
            lost.append(harness.transport.lost)
            assert harness.transport.pending == 500 - harness.transport.lost
        assert lost[0] == lost[1]
        assert 100 < lost[0] < 200

    def test_probe_type_of(self, template_v4):
        dst = parse_address('192.0.2.9', Family.V4)
        assert probe_type_of(parse_reply(build_tcp_syn(template_v4, dst, 1, 2, 3))) is ProbeType.TCP_SYN
        assert probe_type_of(parse_reply(b'junk')) is None


class TestForgeries:
    """Tests for inject_forgeries()."""

    def test_counts(self, make_harness):
        harness = make_harness()
        assert inject_forgeries(harness.transport, 25, seed=1, kind='udp') == 25
        assert harness.transport.pending == 25

    def test_sources(self, make_harness):
        harness = make_harness()
        sources = [parse_address('203.0.113.5', Family.V4)]
        inject_forgeries(harness.transport, 5, seed=1, kind='icmp', sources=sources)
        while (packet := harness.transport.receive(0)) is not None:
            assert parse_reply(packet).src == sources[0]

    def test_replay_needs_genuine_replies(self, make_harness):
        assert inject_forgeries(make_harness().transport, 5, seed=1, kind='replay') == 0

    def test_unknown_kind(self, make_harness):
        with pytest.raises(ValueError):
            inject_forgeries(make_harness().transport, 1, seed=1, kind='smoke')


class TestFixtureScans:
    """Complete scans against the rule fixtures."""

    def test_periphery(self, template_v6, text_sink):
        harness_rules = load_rules(FIXTURES / 'rules' / 'periphery.rules')
        harness = harness_build(harness_rules, seed=3)
        spec = parse_target('2001:db8:100::/40-48', V6, identifier=IdentifierSpec.from_pattern([1, 2]))
        config = ScanConfig(targets=(spec,), probe=get_probe_module('icmp_echo'), template=template_v6,
                            rate=RatePolicy.pps(20_000), seed=3, cooldown_secs=0.5).validate()
        sink, buffer = text_sink('csv', ['saddr', 'daddr', 'outcome'])
        stats = run_scan(config, harness.transport, sink, clock=harness.clock)
        close_sink(sink)
        frame = pd.read_csv(io.StringIO(buffer.getvalue()))
        assert stats.sent == 512
        assert stats.hits == 512
        counts = frame['outcome'].value_counts().to_dict()
        assert counts == {'echo_reply': 256, 'unreach_addr': 256}
        assert set(frame[frame['outcome'] == 'unreach_addr']['saddr']) == {'2001:db8:100::ffff'}

    @pytest.mark.parametrize('module,expected', [('dns', 'dns_noerror'), ('dns_version', 'dns_noerror')])
    def test_resolvers(self, make_harness, make_config, text_sink, module, expected):
        harness = make_harness((FIXTURES / 'rules' / 'dns.rules').read_text())
        config = make_config('198.51.100.0/24', family=Family.V4, probe=module, ports=[53])
        sink, buffer = text_sink('csv', ['daddr', 'outcome'])
        stats = run_scan(config, harness.transport, sink, clock=harness.clock)
        close_sink(sink)
        frame = pd.read_csv(io.StringIO(buffer.getvalue()))
        assert stats.hits == 256
        assert (frame['outcome'] == expected).sum() == 64
        assert (frame['outcome'] == 'unreach_port').sum() == 192
