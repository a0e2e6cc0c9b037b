"""
Probe and reply builders: ICMP/ICMPv6 echo and errors, TCP, UDP, DNS.

Every builder returns a complete L3 packet (IP header included) with all
checksums filled in; build_ethernet() adds the link layer for raw sends.
DNS helpers return the DNS message only, to be carried by build_udp().
"""

import struct
from typing import Iterable, Tuple

from ..address_space import Family
from ..errors import CodecError
from .checksum import internet_checksum, transport_checksum
from .headers import (
    PROTO_ICMP, PROTO_ICMPV6, PROTO_TCP, PROTO_UDP,
    FrameTemplate, build_ip_header,
)

ICMP_ECHO_REPLY = 0
ICMP_UNREACH = 3
ICMP_ECHO_REQUEST = 8
ICMP_TIME_EXCEEDED = 11

ICMP6_UNREACH = 1
ICMP6_PACKET_TOO_BIG = 2
ICMP6_TIME_EXCEEDED = 3
ICMP6_ECHO_REQUEST = 128
ICMP6_ECHO_REPLY = 129

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10
TCP_URG = 0x20

DEFAULT_TCP_WINDOW = 65535

DNS_FLAG_QR = 0x8000
DNS_FLAG_RD = 0x0100
DNS_FLAG_RA = 0x0080

DNS_CLASS_IN = 1
DNS_CLASS_CH = 3

DNS_TYPES = {
    'A': 1, 'NS': 2, 'CNAME': 5, 'SOA': 6, 'PTR': 12, 'MX': 15,
    'TXT': 16, 'AAAA': 28, 'ANY': 255,
}

# Largest IPv6 ICMP error must fit the 1280-byte minimum MTU.
_ICMP6_ERROR_QUOTE_LIMIT = 1280 - 40 - 8


def _icmp_protocol(template: FrameTemplate) -> int:
    return PROTO_ICMP if template.family is Family.V4 else PROTO_ICMPV6


def _finish_icmp(template: FrameTemplate, dst: int, message: bytes) -> bytes:
    if template.family is Family.V4:
        checksum = internet_checksum(message)
    else:
        checksum = transport_checksum(6, template.src_addr, dst, PROTO_ICMPV6, message)
    message = message[:2] + struct.pack('!H', checksum) + message[4:]
    return build_ip_header(template, dst, _icmp_protocol(template), len(message)) + message


def build_icmp_echo(template: FrameTemplate, dst: int, id16: int, seq16: int,
                    payload: bytes = b'', reply: bool = False) -> bytes:
    """ICMP echo request (type 8 / 128) or, with reply=True, echo reply (0 / 129)."""
    if template.family is Family.V4:
        icmp_type = ICMP_ECHO_REPLY if reply else ICMP_ECHO_REQUEST
    else:
        icmp_type = ICMP6_ECHO_REPLY if reply else ICMP6_ECHO_REQUEST
    message = struct.pack('!BBHHH', icmp_type, 0, 0, id16 & 0xFFFF, seq16 & 0xFFFF) + payload
    return _finish_icmp(template, dst, message)


def build_icmp_error(template: FrameTemplate, dst: int, icmp_type: int, code: int,
                     quoted: bytes, mtu: int = 0) -> bytes:
    """
    ICMP error quoting an offending packet.

    IPv4 quotes the IP header plus the first 8 bytes of its payload; IPv6
    quotes as much as fits in the minimum MTU.
    """
    if template.family is Family.V4:
        ihl = (quoted[0] & 0x0F) * 4 if quoted else 20
        quoted = quoted[:ihl + 8]
    else:
        quoted = quoted[:_ICMP6_ERROR_QUOTE_LIMIT]
    message = struct.pack('!BBHI', icmp_type, code, 0, mtu) + quoted
    return _finish_icmp(template, dst, message)


def build_tcp(template: FrameTemplate, dst: int, sport: int, dport: int,
              seq: int, ack: int = 0, flags: int = TCP_SYN,
              window: int = DEFAULT_TCP_WINDOW) -> bytes:
    """TCP segment with a 20-byte header (no options)."""
    segment = struct.pack('!HHIIBBHHH', sport, dport, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                          5 << 4, flags, window, 0, 0)
    checksum = transport_checksum(template.family.version, template.src_addr, dst,
                                  PROTO_TCP, segment)
    segment = segment[:16] + struct.pack('!H', checksum) + segment[18:]
    return build_ip_header(template, dst, PROTO_TCP, len(segment)) + segment


def build_tcp_syn(template: FrameTemplate, dst: int, sport: int, dport: int, seq32: int) -> bytes:
    return build_tcp(template, dst, sport, dport, seq32, 0, TCP_SYN)


def build_udp(template: FrameTemplate, dst: int, sport: int, dport: int,
              payload: bytes = b'') -> bytes:
    """UDP datagram; a computed checksum of 0 is sent as 0xffff."""
    length = 8 + len(payload)
    if length > 0xFFFF:
        raise CodecError(f"UDP payload of {len(payload)} bytes does not fit")
    datagram = struct.pack('!HHHH', sport, dport, length, 0) + payload
    checksum = transport_checksum(template.family.version, template.src_addr, dst,
                                  PROTO_UDP, datagram)
    if checksum == 0:
        checksum = 0xFFFF
    datagram = datagram[:6] + struct.pack('!H', checksum) + datagram[8:]
    return build_ip_header(template, dst, PROTO_UDP, len(datagram)) + datagram


def encode_qname(qname: str) -> bytes:
    """Wire encoding of a domain name: length-prefixed labels, root byte last."""
    name = qname.rstrip('.')
    if not name:
        return b'\x00'
    out = bytearray()
    for label in name.split('.'):
        try:
            raw = label.encode('idna') if not label.isascii() else label.encode('ascii')
        except UnicodeError as e:
            raise CodecError(f"Label {label!r} in {qname!r} is not a valid host name: {e}") from None
        if not raw:
            raise CodecError(f"Empty label in {qname!r}")
        if len(raw) > 63:
            raise CodecError(f"Label {label!r} longer than 63 bytes")
        out.append(len(raw))
        out += raw
    out.append(0)
    if len(out) > 255:
        raise CodecError(f"Name {qname!r} longer than 255 bytes on the wire")
    return bytes(out)


def qtype_code(qtype) -> int:
    if isinstance(qtype, int):
        code = qtype
    else:
        text = str(qtype).upper()
        if text in DNS_TYPES:
            return DNS_TYPES[text]
        if not text.isdigit():
            raise CodecError(f"Unknown DNS type {qtype!r}")
        code = int(text)
    if not 0 <= code <= 0xFFFF:
        raise CodecError(f"DNS type {qtype!r} outside [0, 65535]")
    return code


def build_dns_query(qname: str, qtype, txid: int, qclass: int = DNS_CLASS_IN,
                    recursion_desired: bool = True) -> bytes:
    """DNS query with QDCOUNT=1 and no EDNS0."""
    flags = DNS_FLAG_RD if recursion_desired else 0
    header = struct.pack('!HHHHHH', txid & 0xFFFF, flags, 1, 0, 0, 0)
    return header + encode_qname(qname) + struct.pack('!HH', qtype_code(qtype), qclass)


def build_version_bind_query(txid: int) -> bytes:
    """CHAOS TXT version.bind, the classic server software fingerprint."""
    return build_dns_query('version.bind', 'TXT', txid, qclass=DNS_CLASS_CH,
                           recursion_desired=False)


def encode_txt(text: str) -> bytes:
    raw = text.encode('utf-8')[:255]
    return bytes([len(raw)]) + raw


def build_dns_response(txid: int, qname: str, qtype, qclass: int = DNS_CLASS_IN,
                       rcode: int = 0,
                       answers: Iterable[Tuple[int, bytes]] = (),
                       ttl: int = 300) -> bytes:
    """
    DNS response echoing the question; answers are ``(rtype, rdata)`` pairs
    whose owner name points back at the question name.
    """
    answers = list(answers)
    flags = DNS_FLAG_QR | DNS_FLAG_RD | DNS_FLAG_RA | (rcode & 0x0F)
    message = bytearray(struct.pack('!HHHHHH', txid & 0xFFFF, flags, 1, len(answers), 0, 0))
    message += encode_qname(qname) + struct.pack('!HH', qtype_code(qtype), qclass)
    for rtype, rdata in answers:
        message += struct.pack('!HHHIH', 0xC00C, rtype, qclass, ttl, len(rdata)) + rdata
    return bytes(message)
