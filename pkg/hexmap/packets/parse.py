"""
Structural reply parsing.

parse_reply() accepts arbitrary bytes starting at the IP header and never
raises: anything truncated, fragmented or foreign comes back as
``ReplyKind.OTHER``. ICMP errors carry the quoted offending packet as a
nested, possibly truncated, PacketView in ``inner``.
"""

import enum
import ipaddress
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from ..address_space import Family
from .headers import PROTO_ICMP, PROTO_ICMPV6, PROTO_TCP, PROTO_UDP
from .probes import (
    DNS_FLAG_QR, ICMP6_ECHO_REPLY, ICMP6_ECHO_REQUEST, ICMP6_PACKET_TOO_BIG,
    ICMP6_TIME_EXCEEDED, ICMP6_UNREACH, ICMP_ECHO_REPLY, ICMP_ECHO_REQUEST,
    ICMP_TIME_EXCEEDED, ICMP_UNREACH, TCP_ACK, TCP_FIN, TCP_PSH, TCP_RST,
    TCP_SYN, TCP_URG,
)

_V6_EXTENSION_HEADERS = (0, 43, 60)
_V6_FRAGMENT_HEADER = 44
_MAX_EXTENSION_HEADERS = 4
_MAX_DNS_ANSWERS = 32
_MAX_NAME_JUMPS = 64

_TCP_FLAG_NAMES = (
    (TCP_FIN, 'FIN'), (TCP_SYN, 'SYN'), (TCP_RST, 'RST'),
    (TCP_PSH, 'PSH'), (TCP_ACK, 'ACK'), (TCP_URG, 'URG'),
)

_DNS_RCODES = {
    0: 'noerror', 1: 'formerr', 2: 'servfail', 3: 'nxdomain', 4: 'notimp', 5: 'refused',
}


class ReplyKind(enum.Enum):
    ICMP_ECHO_REPLY = 'icmp_echo_reply'
    ICMP_ECHO_REQUEST = 'icmp_echo_request'
    ICMP_ERROR = 'icmp_error'
    TCP = 'tcp'
    UDP = 'udp'
    DNS = 'dns'
    OTHER = 'other'


class _Truncated(Exception):
    pass


@dataclass
class DnsInfo:
    txid: int
    flags: int
    qname: str
    qtype: int
    qclass: int
    ancount: int
    answers: List[str] = field(default_factory=list)

    @property
    def is_response(self) -> bool:
        return bool(self.flags & DNS_FLAG_QR)

    @property
    def rcode(self) -> int:
        return self.flags & 0x0F

    @property
    def rcode_name(self) -> str:
        return _DNS_RCODES.get(self.rcode, f'rcode{self.rcode}')


@dataclass
class PacketView:
    """
    Parsed view of one packet. Offsets index into ``raw``.
    """

    raw: bytes
    kind: ReplyKind = ReplyKind.OTHER
    family: Optional[Family] = None
    src: int = 0
    dst: int = 0
    protocol: int = -1
    ttl: int = 0
    l3_offset: int = 0
    l4_offset: int = -1
    payload_offset: int = -1
    end: int = 0
    icmp_type: int = -1
    icmp_code: int = -1
    icmp_id: int = -1
    icmp_seq: int = -1
    error_subtype: Optional[str] = None
    sport: int = -1
    dport: int = -1
    tcp_seq: int = -1
    tcp_ack: int = -1
    tcp_flags: int = -1
    dns: Optional[DnsInfo] = None
    inner: Optional['PacketView'] = None
    truncated: bool = False

    @property
    def payload(self) -> bytes:
        if self.payload_offset < 0:
            return b''
        return self.raw[self.payload_offset:self.end]

    @property
    def tcp_flag_names(self) -> frozenset:
        if self.tcp_flags < 0:
            return frozenset()
        return frozenset(name for bit, name in _TCP_FLAG_NAMES if self.tcp_flags & bit)

    @property
    def src_text(self) -> str:
        return _address_text(self.family, self.src)


def _address_text(family: Optional[Family], value: int) -> str:
    if family is Family.V4:
        return str(ipaddress.IPv4Address(value))
    if family is Family.V6:
        return str(ipaddress.IPv6Address(value))
    return ''


def _need(buf: bytes, end: int):
    if end > len(buf):
        raise _Truncated()


def _check(limit: int, pos: int):
    if pos > limit:
        raise _Truncated()


def _v4_error_subtype(icmp_type: int, code: int) -> Optional[str]:
    if icmp_type == ICMP_TIME_EXCEEDED:
        return 'time_exceeded'
    if icmp_type != ICMP_UNREACH:
        return None
    if code == 0:
        return 'unreach_noroute'
    if code == 1:
        return 'unreach_addr'
    if code == 3:
        return 'unreach_port'
    if code == 4:
        return 'packet_too_big'
    if code in (9, 10, 13):
        return 'unreach_admin'
    return 'unreach_other'


def _v6_error_subtype(icmp_type: int, code: int) -> Optional[str]:
    if icmp_type == ICMP6_TIME_EXCEEDED:
        return 'time_exceeded'
    if icmp_type == ICMP6_PACKET_TOO_BIG:
        return 'packet_too_big'
    if icmp_type != ICMP6_UNREACH:
        return None
    return {0: 'unreach_noroute', 1: 'unreach_admin', 3: 'unreach_addr',
            4: 'unreach_port'}.get(code, 'unreach_other')


def decode_name(buf: bytes, offset: int) -> Tuple[str, int]:
    """Decode a possibly compressed DNS name; returns (name, offset after it)."""
    labels = []
    jumps = 0
    resume = None
    total = 0
    while True:
        _need(buf, offset + 1)
        length = buf[offset]
        if length & 0xC0 == 0xC0:
            _need(buf, offset + 2)
            if resume is None:
                resume = offset + 2
            offset = ((length & 0x3F) << 8) | buf[offset + 1]
            jumps += 1
            if jumps > _MAX_NAME_JUMPS:
                raise _Truncated()
            continue
        if length & 0xC0:
            raise _Truncated()
        offset += 1
        if length == 0:
            break
        _need(buf, offset + length)
        labels.append(buf[offset:offset + length].decode('ascii', errors='replace'))
        total += length + 1
        if total > 255:
            raise _Truncated()
        offset += length
    return '.'.join(labels), (resume if resume is not None else offset)


def parse_dns(message: bytes) -> Optional[DnsInfo]:
    """Parse a DNS message with exactly one question, or return None."""
    try:
        _need(message, 12)
        txid, flags, qdcount, ancount, _, _ = struct.unpack_from('!HHHHHH', message, 0)
        if qdcount != 1:
            return None
        qname, offset = decode_name(message, 12)
        _need(message, offset + 4)
        qtype, qclass = struct.unpack_from('!HH', message, offset)
        offset += 4
        info = DnsInfo(txid, flags, qname, qtype, qclass, ancount)
    except (_Truncated, struct.error, IndexError):
        return None
    try:
        for _ in range(min(ancount, _MAX_DNS_ANSWERS)):
            _, offset = decode_name(message, offset)
            _need(message, offset + 10)
            rtype, _, _, rdlength = struct.unpack_from('!HHIH', message, offset)
            offset += 10
            _need(message, offset + rdlength)
            rdata = message[offset:offset + rdlength]
            offset += rdlength
            if rtype == 1 and rdlength == 4:
                info.answers.append(str(ipaddress.IPv4Address(rdata)))
            elif rtype == 28 and rdlength == 16:
                info.answers.append(str(ipaddress.IPv6Address(rdata)))
            elif rtype == 16 and rdlength:
                info.answers.append(rdata[1:1 + rdata[0]].decode('utf-8', errors='replace'))
    except (_Truncated, struct.error, IndexError):
        pass
    return info


def _parse_l4(view: PacketView, buf: bytes, offset: int, end: int, quoted: bool, depth: int):
    proto = view.protocol
    view.l4_offset = offset
    icmp_proto = PROTO_ICMP if view.family is Family.V4 else PROTO_ICMPV6

    if proto == icmp_proto:
        _check(end, offset + 4)
        view.icmp_type, view.icmp_code = buf[offset], buf[offset + 1]
        if view.family is Family.V4:
            echo_request, echo_reply = ICMP_ECHO_REQUEST, ICMP_ECHO_REPLY
            subtype = _v4_error_subtype(view.icmp_type, view.icmp_code)
        else:
            echo_request, echo_reply = ICMP6_ECHO_REQUEST, ICMP6_ECHO_REPLY
            subtype = _v6_error_subtype(view.icmp_type, view.icmp_code)
        if view.icmp_type in (echo_request, echo_reply):
            if not quoted:
                _check(end, offset + 8)
            if offset + 8 <= end:
                view.icmp_id, view.icmp_seq = struct.unpack_from('!HH', buf, offset + 4)
                view.payload_offset = offset + 8
            view.kind = (ReplyKind.ICMP_ECHO_REPLY if view.icmp_type == echo_reply
                         else ReplyKind.ICMP_ECHO_REQUEST)
        elif subtype is not None and depth == 0:
            _check(end, offset + 8)
            view.error_subtype = subtype
            view.payload_offset = offset + 8
            view.inner = _parse_ip(buf[offset + 8:end], quoted=True, depth=depth + 1)
            view.kind = ReplyKind.ICMP_ERROR
        return

    if proto == PROTO_TCP:
        _check(end, offset + (8 if quoted else 20))
        view.sport, view.dport, view.tcp_seq = struct.unpack_from('!HHI', buf, offset)
        if offset + 14 <= end:
            view.tcp_ack = struct.unpack_from('!I', buf, offset + 8)[0]
            data_offset = (buf[offset + 12] >> 4) * 4
            view.tcp_flags = buf[offset + 13]
            if not quoted and (data_offset < 20 or offset + data_offset > end):
                raise _Truncated()
            view.payload_offset = min(offset + data_offset, end)
        view.kind = ReplyKind.TCP
        return

    if proto == PROTO_UDP:
        _check(end, offset + 8)
        view.sport, view.dport, length = struct.unpack_from('!HHH', buf, offset)
        if not quoted and (length < 8 or offset + length > end):
            raise _Truncated()
        if not quoted:
            view.end = end = offset + length
        view.payload_offset = offset + 8
        view.kind = ReplyKind.UDP
        message = buf[offset + 8:end]
        if len(message) >= 12:
            info = parse_dns(message)
            if info is not None:
                view.dns = info
                view.kind = ReplyKind.DNS


def _parse_ip(buf: bytes, quoted: bool = False, depth: int = 0) -> Optional[PacketView]:
    view = PacketView(raw=buf)
    try:
        _need(buf, 1)
        version = buf[0] >> 4
        if version == 4:
            _need(buf, 20)
            ihl = (buf[0] & 0x0F) * 4
            total, frag = struct.unpack_from('!H2xH', buf, 2)
            if ihl < 20:
                raise _Truncated()
            _need(buf, ihl)
            if quoted:
                end = min(len(buf), max(total, ihl))
            else:
                if total < ihl or total > len(buf):
                    raise _Truncated()
                end = total
            view.family = Family.V4
            view.ttl = buf[8]
            view.protocol = buf[9]
            view.src, view.dst = struct.unpack_from('!II', buf, 12)
            view.end = end
            if frag & 0x1FFF:
                return view
            offset = ihl
        elif version == 6:
            _need(buf, 40)
            payload_len, next_header, hop_limit = struct.unpack_from('!HBB', buf, 4)
            if quoted:
                end = min(len(buf), 40 + payload_len)
            else:
                if 40 + payload_len > len(buf):
                    raise _Truncated()
                end = 40 + payload_len
            view.family = Family.V6
            view.ttl = hop_limit
            view.src = int.from_bytes(buf[8:24], 'big')
            view.dst = int.from_bytes(buf[24:40], 'big')
            view.end = end
            offset = 40
            for _ in range(_MAX_EXTENSION_HEADERS + 1):
                if next_header in _V6_EXTENSION_HEADERS:
                    _need(buf, offset + 2)
                    next_header, hdr_len = buf[offset], (buf[offset + 1] + 1) * 8
                    offset += hdr_len
                elif next_header == _V6_FRAGMENT_HEADER:
                    _need(buf, offset + 8)
                    frag = struct.unpack_from('!H', buf, offset + 2)[0]
                    next_header = buf[offset]
                    offset += 8
                    if frag & 0xFFF8:
                        view.protocol = next_header
                        return view
                else:
                    break
            else:
                raise _Truncated()
            if offset > end:
                raise _Truncated()
            view.protocol = next_header
        else:
            raise _Truncated()
        _parse_l4(view, buf, offset, view.end, quoted, depth)
        return view
    except (_Truncated, struct.error, IndexError, ValueError):
        if quoted and view.family is not None:
            view.truncated = True
            return view
        if quoted:
            return None
        return PacketView(raw=buf)


def parse_reply(raw: bytes) -> PacketView:
    """
    Classify one L3 packet.

    Returns:
        PacketView whose ``kind`` is one of ReplyKind; never raises.
    """
    try:
        view = _parse_ip(bytes(raw))
    except Exception:
        view = None
    return view if view is not None else PacketView(raw=bytes(raw))
