"""
Tests for packet construction and parsing.

Golden vectors under fixtures/golden were assembled by hand from the RFC
layouts; scapy, when installed, serves as an independent decoder.
"""

import random
import struct

import pytest

from hexmap.address_space import Family, parse_address
from hexmap.errors import CodecError
from hexmap.packets import (
    FrameTemplate, ReplyKind, build_dns_query, build_dns_response, build_ethernet,
    build_icmp_echo, build_icmp_error, build_ipv4_header, build_ipv6_header, build_tcp,
    build_tcp_syn, build_udp, build_version_bind_query, encode_qname, internet_checksum,
    parse_dns, parse_mac, parse_reply, strip_ethernet, transport_checksum,
)
from hexmap.packets.headers import PROTO_ICMPV6, PROTO_TCP, PROTO_UDP
from hexmap.packets.probes import DNS_CLASS_CH, TCP_ACK, TCP_RST, TCP_SYN, encode_txt

from conftest import golden, slow_trials

DST_V4 = parse_address('192.0.2.2', Family.V4)
DST_V6 = parse_address('2001:db8::2', Family.V6)


def l4_checksum_ok(packet: bytes) -> bool:
    """Re-sum the L4 checksum including its pseudo-header."""
    view = parse_reply(packet)
    segment = packet[view.l4_offset:view.end]
    if view.family is Family.V4 and view.protocol == 1:
        return internet_checksum(segment) == 0
    return transport_checksum(view.family.version, view.src, view.dst, view.protocol, segment) == 0


# =============================================================================
# Checksums and headers
# =============================================================================

class TestChecksum:
    """Tests for the RFC 1071 checksum."""

    def test_rfc_example(self):
        assert internet_checksum(bytes.fromhex('0001f203f4f5f6f7')) == 0x220D

    def test_empty(self):
        assert internet_checksum(b'') == 0xFFFF

    def test_odd_length_padded(self):
        assert internet_checksum(b'\x01') == internet_checksum(b'\x01\x00')

    def test_filled_checksum_resums_to_zero(self):
        data = bytes(range(1, 31))
        checksum = internet_checksum(data)
        assert internet_checksum(data + struct.pack('!H', checksum)) == 0


class TestHeaders:
    """Tests for IPv4/IPv6/Ethernet headers."""

    def test_ipv6_fields(self, template_v6):
        header = build_ipv6_header(template_v6, DST_V6, 58, 8)
        assert len(header) == 40
        assert header[4:6] == b'\x00\x08'
        assert header[6] == 58
        assert header[7] == 0x40
        assert header[0] >> 4 == 6

    def test_ipv4_checksum(self, template_v4):
        header = build_ipv4_header(template_v4, DST_V4, PROTO_TCP, 20)
        assert len(header) == 20
        assert internet_checksum(header) == 0
        assert struct.unpack('!H', header[2:4])[0] == 40

    def test_oversize_payload(self, template_v4, template_v6):
        with pytest.raises(CodecError):
            build_ipv4_header(template_v4, DST_V4, PROTO_UDP, 65535)
        with pytest.raises(CodecError):
            build_ipv6_header(template_v6, DST_V6, PROTO_UDP, 65536)

    def test_ethernet_round_trip(self, template_v6):
        template = FrameTemplate(Family.V6, template_v6.src_addr,
                                 parse_mac('02:00:00:00:00:01'), parse_mac('02-00-00-00-00-02'))
        packet = build_icmp_echo(template, DST_V6, 1, 2)
        frame = build_ethernet(template, packet)
        assert frame[:6] == bytes.fromhex('020000000002')
        assert frame[6:12] == bytes.fromhex('020000000001')
        assert strip_ethernet(frame) == (0x86DD, packet)
        assert strip_ethernet(frame[:10]) is None

    @pytest.mark.parametrize('text', ['02:00:00:00:00', 'zz:00:00:00:00:01', ''])
    def test_bad_mac(self, text):
        with pytest.raises(CodecError):
            parse_mac(text)


# =============================================================================
# Probe builders
# =============================================================================

class TestGoldenPackets:
    """Builders reproduce the hand-assembled vectors byte for byte."""

    def test_icmp6_echo(self, template_v6):
        assert build_icmp_echo(template_v6, DST_V6, 0, 0) == golden('icmp6_echo')

    def test_icmp4_echo(self, template_v4):
        assert build_icmp_echo(template_v4, DST_V4, 0x1234, 0x0001) == golden('icmp4_echo')

    def test_tcp_syn4(self, template_v4):
        assert build_tcp_syn(template_v4, DST_V4, 40000, 80, 0x01234567) == golden('tcp_syn4')

    def test_udp6(self, template_v6):
        assert build_udp(template_v6, DST_V6, 40000, 53, b'hexmap') == golden('udp6')

    def test_dns_a4(self, template_v4):
        query = build_dns_query('example.com', 'A', 0x0123)
        assert build_udp(template_v4, DST_V4, 40000, 53, query) == golden('dns_a4')

    @pytest.mark.parametrize('name', ['icmp6_echo', 'icmp4_echo', 'tcp_syn4', 'udp6', 'dns_a4'])
    def test_checksums_verify(self, name):
        assert l4_checksum_ok(golden(name))


class TestIcmpEcho:
    """Tests for build_icmp_echo()."""

    def test_field_placement(self, template_v4):
        packet = build_icmp_echo(template_v4, DST_V4, 0x1234, 0x0001)
        assert packet[20] == 8
        assert packet[24:28] == bytes.fromhex('12340001')

    def test_v6_type(self, template_v6):
        assert build_icmp_echo(template_v6, DST_V6, 1, 1)[40] == 128
        assert build_icmp_echo(template_v6, DST_V6, 1, 1, reply=True)[40] == 129

    def test_payload_bit_flip_breaks_checksum(self, template_v6):
        packet = bytearray(build_icmp_echo(template_v6, DST_V6, 7, 9, b'payload!'))
        assert l4_checksum_ok(bytes(packet))
        for bit in range(64):
            flipped = bytearray(packet)
            flipped[48 + bit // 8] ^= 1 << (bit % 8)
            assert not l4_checksum_ok(bytes(flipped))


class TestTcpUdpDns:
    """Tests for TCP, UDP and DNS builders."""

    def test_syn_flags_and_offset(self, template_v6):
        packet = build_tcp_syn(template_v6, DST_V6, 40000, 443, 99)
        assert packet[40 + 13] == 0x02
        assert packet[40 + 12] >> 4 == 5
        assert l4_checksum_ok(packet)

    def test_udp_length(self, template_v4):
        packet = build_udp(template_v4, DST_V4, 1000, 2000, b'abc')
        assert struct.unpack('!H', packet[24:26])[0] == 11
        assert l4_checksum_ok(packet)

    def test_udp_zero_checksum_sent_as_ffff(self, template_v6):
        first = build_udp(template_v6, DST_V6, 1000, 2000, b'\x00\x00')
        filler = struct.unpack('!H', first[46:48])[0]
        assert filler != 0
        packet = build_udp(template_v6, DST_V6, 1000, 2000, struct.pack('!H', filler))
        assert packet[46:48] == b'\xff\xff'
        assert l4_checksum_ok(packet)

    def test_qname_encoding(self):
        assert encode_qname('example.com') == b'\x07example\x03com\x00'
        assert encode_qname('example.com.') == b'\x07example\x03com\x00'
        assert encode_qname('.') == b'\x00'

    @pytest.mark.parametrize('name', ['a' * 64 + '.com', 'a..com', '.'.join(['a' * 60] * 5),
                                      'ex\ufffdample.com'])
    def test_bad_qname(self, name):
        with pytest.raises(CodecError):
            encode_qname(name)

    def test_dns_query_header(self):
        query = build_dns_query('example.com', 'AAAA', 0xBEEF)
        txid, flags, qd, an, ns, ar = struct.unpack('!6H', query[:12])
        assert (txid, qd, an, ns, ar) == (0xBEEF, 1, 0, 0, 0)
        assert flags & 0x0100
        assert query[-4:] == struct.pack('!HH', 28, 1)

    def test_version_bind(self):
        info = parse_dns(build_version_bind_query(7))
        assert (info.qname, info.qtype, info.qclass) == ('version.bind', 16, DNS_CLASS_CH)


# =============================================================================
# Parsing
# =============================================================================

class TestParseReply:
    """Tests for parse_reply() classification."""

    def test_syn_ack(self, template_v4):
        packet = build_tcp(template_v4, DST_V4, 80, 40000, 5, ack=100, flags=TCP_SYN | TCP_ACK)
        view = parse_reply(packet)
        assert view.kind is ReplyKind.TCP
        assert view.tcp_flag_names == {'SYN', 'ACK'}
        assert (view.sport, view.dport, view.tcp_ack) == (80, 40000, 100)

    def test_icmp6_echo_reply(self, template_v6):
        view = parse_reply(build_icmp_echo(template_v6, DST_V6, 3, 4, b'xy', reply=True))
        assert view.kind is ReplyKind.ICMP_ECHO_REPLY
        assert (view.icmp_id, view.icmp_seq, view.payload) == (3, 4, b'xy')
        assert view.src_text == '2001:db8::1'

    def test_noise_is_other(self):
        rng = random.Random(40)
        for _ in range(500):
            noise = bytes([rng.choice([0x00, 0x12, 0x7f, 0xff])]) + bytes(rng.getrandbits(8) for _ in range(39))
            assert parse_reply(noise).kind is ReplyKind.OTHER

    def test_build_parse_round_trip(self, template_v6):
        packet = build_tcp(template_v6, DST_V6, 41000, 22, 0xDEADBEEF, ack=0x01020304, flags=TCP_RST)
        view = parse_reply(packet)
        assert (view.src, view.dst, view.ttl) == (template_v6.src_addr, DST_V6, 64)
        assert (view.sport, view.dport, view.tcp_seq, view.tcp_ack, view.tcp_flags) == \
            (41000, 22, 0xDEADBEEF, 0x01020304, TCP_RST)

    def test_dns_response(self, template_v4):
        message = build_dns_response(0x55AA, 'example.com', 'A', rcode=3,
                                     answers=[(1, bytes([192, 0, 2, 7]))])
        view = parse_reply(build_udp(template_v4, DST_V4, 53, 40000, message))
        assert view.kind is ReplyKind.DNS
        assert view.dns.is_response
        assert view.dns.rcode_name == 'nxdomain'
        assert view.dns.answers == ['192.0.2.7']
        assert view.dns.qname == 'example.com'

    def test_txt_answer(self, template_v4):
        message = build_dns_response(1, 'version.bind', 'TXT', DNS_CLASS_CH,
                                     answers=[(16, encode_txt('9.18.1'))])
        assert parse_dns(message).answers == ['9.18.1']

    def test_icmp_error_quotes_probe(self, template_v4):
        probe = build_tcp_syn(template_v4, DST_V4, 40000, 80, 77)
        router = FrameTemplate(Family.V4, parse_address('198.51.100.1', Family.V4))
        view = parse_reply(build_icmp_error(router, template_v4.src_addr, 3, 13, probe))
        assert view.kind is ReplyKind.ICMP_ERROR
        assert view.error_subtype == 'unreach_admin'
        assert view.inner.kind is ReplyKind.TCP
        assert (view.inner.dst, view.inner.sport, view.inner.tcp_seq) == (DST_V4, 40000, 77)

    def test_v6_error_subtypes(self, template_v6):
        probe = build_icmp_echo(template_v6, DST_V6, 1, 2)
        for (icmp_type, code), subtype in {(1, 0): 'unreach_noroute', (1, 1): 'unreach_admin',
                                           (1, 4): 'unreach_port', (3, 0): 'time_exceeded',
                                           (2, 0): 'packet_too_big'}.items():
            view = parse_reply(build_icmp_error(template_v6, DST_V6, icmp_type, code, probe))
            assert view.error_subtype == subtype
            assert view.inner.kind is ReplyKind.ICMP_ECHO_REQUEST

    def test_v6_extension_header_skipped(self, template_v6):
        echo = build_icmp_echo(template_v6, DST_V6, 5, 6, reply=True)[40:]
        hop_by_hop = bytes([PROTO_ICMPV6, 0]) + b'\x01\x04\x00\x00\x00\x00'
        header = build_ipv6_header(template_v6, DST_V6, 0, len(hop_by_hop) + len(echo))
        view = parse_reply(header + hop_by_hop + echo)
        assert view.kind is ReplyKind.ICMP_ECHO_REPLY
        assert view.icmp_id == 5

    def test_truncations_never_raise(self):
        for name in ('icmp6_echo', 'icmp4_echo', 'tcp_syn4', 'udp6', 'dns_a4'):
            packet = golden(name)
            for cut in range(len(packet)):
                assert parse_reply(packet[:cut]).kind is ReplyKind.OTHER

    def test_fuzz_total(self):
        rng = random.Random(2024)
        seeds = [golden(n) for n in ('icmp6_echo', 'icmp4_echo', 'tcp_syn4', 'udp6', 'dns_a4')]
        for _ in range(5000):
            if rng.random() < 0.5:
                buf = bytes(rng.getrandbits(8) for _ in range(rng.randrange(0, 100)))
            else:
                buf = bytearray(rng.choice(seeds))
                for _ in range(rng.randrange(1, 4)):
                    buf[rng.randrange(len(buf))] = rng.getrandbits(8)
                buf = bytes(buf)
            first = parse_reply(buf)
            assert parse_reply(buf).kind is first.kind

    @pytest.mark.slow
    def test_fuzz_random_buffers(self):
        np = pytest.importorskip('numpy')
        rng = np.random.default_rng(1)
        for _ in range(slow_trials(20000)):
            parse_reply(rng.bytes(int(rng.integers(0, 120))))


# =============================================================================
# Independent decoder
# =============================================================================

class TestScapyOracle:
    """Cross-check the golden vectors with scapy's encoder."""

    @pytest.fixture(autouse=True)
    def scapy(self):
        return pytest.importorskip('scapy.all')

    def test_icmp6_echo(self, scapy):
        raw = golden('icmp6_echo')
        pkt = scapy.IPv6(raw)
        assert pkt[scapy.ICMPv6EchoRequest].id == 0
        del pkt[scapy.ICMPv6EchoRequest].cksum
        assert bytes(pkt) == raw

    def test_icmp4_echo(self, scapy):
        raw = golden('icmp4_echo')
        pkt = scapy.IP(raw)
        assert (pkt[scapy.ICMP].id, pkt[scapy.ICMP].seq) == (0x1234, 1)
        del pkt[scapy.IP].chksum
        del pkt[scapy.ICMP].chksum
        assert bytes(pkt) == raw

    def test_tcp_syn4(self, scapy):
        raw = golden('tcp_syn4')
        pkt = scapy.IP(raw)
        assert pkt[scapy.TCP].flags == 'S'
        del pkt[scapy.IP].chksum
        del pkt[scapy.TCP].chksum
        assert bytes(pkt) == raw

    def test_udp6(self, scapy):
        raw = golden('udp6')
        pkt = scapy.IPv6(raw)
        del pkt[scapy.UDP].chksum
        assert bytes(pkt) == raw

    def test_dns_a4(self, scapy):
        pkt = scapy.IP(golden('dns_a4'))
        assert pkt[scapy.DNS].id == 0x0123
        assert pkt[scapy.DNS].qd.qname == b'example.com.'
