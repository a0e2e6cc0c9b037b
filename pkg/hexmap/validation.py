"""
Stateless Probe Validation
==========================
Each probe carries a token derived from a per-scan secret and its
destination; a reply is accepted only if the fields it echoes match the
token recomputed from the reply itself. Nothing about individual probes is
remembered between send and receive.

Field budget per probe type:
- ICMP echo: id = token[0..16), seq = token[16..32)
- TCP SYN:   seq = token[0..32), sport = base + token[32..48) mod range
- UDP/DNS:   txid = token[0..16), sport = base + token[32..48) mod range

Token bits are numbered MSB-first over the 64-bit token.

Usage:
    secret = ScanSecret.from_seed(seed)
    token = derive_token(secret, dst, 80, ProbeType.TCP_SYN, Family.V4)
    fields = embed(token, ProbeType.TCP_SYN)
    result = verify(parse_reply(raw), secret)
"""

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import algorithms

from .address_space import Family
from .config import EPHEMERAL_BASE, EPHEMERAL_RANGE
from .packets.parse import PacketView, ReplyKind
from .packets.probes import DNS_CLASS_CH, TCP_ACK, TCP_RST, TCP_SYN

VERSION_BIND = 'version.bind'


class ProbeType(enum.IntEnum):
    ICMP_ECHO = 1
    TCP_SYN = 2
    UDP = 3
    DNS = 4
    DNS_VERSION = 5


class RejectReason(enum.Enum):
    BAD_TOKEN = 'bad_token'
    UNPARSEABLE = 'unparseable'
    FOREIGN_PORT = 'foreign_port'
    LATE_DUPLICATE = 'late_duplicate'


@dataclass(frozen=True)
class ScanSecret:
    key: bytes = field(repr=False)

    def __post_init__(self):
        if len(self.key) != 16:
            raise ValueError("Scan secret must be 16 bytes")

    @classmethod
    def from_seed(cls, seed: int) -> 'ScanSecret':
        key = hashlib.blake2b(
            (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, 'big'),
            digest_size=16,
            person=b'hexmap-secret',
        ).digest()
        return cls(key)

    @cached_property
    def _cmac(self) -> cmac.CMAC:
        return cmac.CMAC(algorithms.AES(self.key))

    def mac(self, message: bytes) -> bytes:
        """AES-CMAC of message under this secret."""
        ctx = self._cmac.copy()
        ctx.update(message)
        return ctx.finalize()


@dataclass(frozen=True)
class ProbeFields:
    """Protocol field values a probe must carry."""

    icmp_id: int = 0
    icmp_seq: int = 0
    tcp_seq: int = 0
    sport: int = 0
    txid: int = 0


@dataclass(frozen=True)
class Accept:
    probe_dst: int
    probe_port: int
    probe_type: ProbeType
    family: Family
    outcome: str
    responder: int
    local_port: int

    accepted = True


@dataclass(frozen=True)
class Reject:
    reason: RejectReason

    accepted = False


VerifyResult = Union[Accept, Reject]


def derive_token(secret: ScanSecret, dst_addr: int, dst_port: int,
                 probe_type: ProbeType, family: Family) -> int:
    """
    AES-CMAC over family | addr | port | type, truncated to 64 bits.
    """
    width = 4 if family is Family.V4 else 16
    message = (bytes([family.version]) + dst_addr.to_bytes(width, 'big')
               + struct.pack('!HB', dst_port, int(probe_type)))
    return int.from_bytes(secret.mac(message)[:8], 'big')


def _source_port(token: int) -> int:
    return EPHEMERAL_BASE + ((token >> 16) & 0xFFFF) % EPHEMERAL_RANGE


def embed(token: int, probe_type: ProbeType) -> ProbeFields:
    """Spread a 64-bit token over the probe type's echoed fields."""
    if probe_type is ProbeType.ICMP_ECHO:
        return ProbeFields(icmp_id=token >> 48, icmp_seq=(token >> 32) & 0xFFFF)
    if probe_type is ProbeType.TCP_SYN:
        return ProbeFields(tcp_seq=token >> 32, sport=_source_port(token))
    return ProbeFields(txid=token >> 48, sport=_source_port(token))


def probe_fields(secret: ScanSecret, dst_addr: int, dst_port: int,
                 probe_type: ProbeType, family: Family) -> ProbeFields:
    return embed(derive_token(secret, dst_addr, dst_port, probe_type, family), probe_type)


def _is_local_port(port: int) -> bool:
    return EPHEMERAL_BASE <= port < EPHEMERAL_BASE + EPHEMERAL_RANGE


def _same_name(a: str, b: str) -> bool:
    return a.rstrip('.').lower() == b.rstrip('.').lower()


def _tcp_outcome(flags: int) -> str:
    if flags & TCP_SYN and flags & TCP_ACK:
        return 'synack'
    if flags & TCP_RST:
        return 'rst'
    return 'tcp_other'


def _prefer(candidates, expected: Optional[ProbeType]):
    if expected in candidates:
        return (expected,) + tuple(c for c in candidates if c is not expected)
    return tuple(candidates)


def _dns_candidates(view: PacketView, expected: Optional[ProbeType]):
    if view.dns is not None and view.dns.qclass == DNS_CLASS_CH:
        return _prefer((ProbeType.DNS_VERSION, ProbeType.DNS, ProbeType.UDP), expected)
    if view.dns is not None:
        return _prefer((ProbeType.DNS, ProbeType.DNS_VERSION, ProbeType.UDP), expected)
    return (ProbeType.UDP,)


def _udp_matches(view: PacketView, secret: ScanSecret, probe_dst: int, probe_port: int,
                 local_port: int, probe_type: ProbeType, qname: Optional[str]) -> bool:
    fields = probe_fields(secret, probe_dst, probe_port, probe_type, view.family)
    if fields.sport != local_port:
        return False
    if probe_type is ProbeType.UDP:
        return True
    dns = view.dns
    if dns is None:
        return False
    if dns.txid != fields.txid:
        return False
    if probe_type is ProbeType.DNS_VERSION:
        return dns.qclass == DNS_CLASS_CH and _same_name(dns.qname, VERSION_BIND)
    return qname is None or _same_name(dns.qname, qname)


def _verify_direct(view: PacketView, secret: ScanSecret, qname: Optional[str],
                   expected: Optional[ProbeType]) -> VerifyResult:
    family = view.family
    if view.kind is ReplyKind.ICMP_ECHO_REPLY:
        if view.icmp_id < 0:
            return Reject(RejectReason.UNPARSEABLE)
        fields = probe_fields(secret, view.src, 0, ProbeType.ICMP_ECHO, family)
        if (view.icmp_id, view.icmp_seq) != (fields.icmp_id, fields.icmp_seq):
            return Reject(RejectReason.BAD_TOKEN)
        return Accept(view.src, 0, ProbeType.ICMP_ECHO, family, 'echo_reply', view.src, 0)

    if view.kind is ReplyKind.TCP:
        if not _is_local_port(view.dport):
            return Reject(RejectReason.FOREIGN_PORT)
        if view.tcp_flags < 0:
            return Reject(RejectReason.UNPARSEABLE)
        fields = probe_fields(secret, view.src, view.sport, ProbeType.TCP_SYN, family)
        if fields.sport != view.dport or view.tcp_ack != (fields.tcp_seq + 1) & 0xFFFFFFFF:
            return Reject(RejectReason.BAD_TOKEN)
        return Accept(view.src, view.sport, ProbeType.TCP_SYN, family,
                      _tcp_outcome(view.tcp_flags), view.src, view.dport)

    if view.kind in (ReplyKind.UDP, ReplyKind.DNS):
        if not _is_local_port(view.dport):
            return Reject(RejectReason.FOREIGN_PORT)
        dns = view.dns
        for probe_type in _dns_candidates(view, expected):
            if probe_type is not ProbeType.UDP and not dns.is_response:
                continue
            if _udp_matches(view, secret, view.src, view.sport, view.dport, probe_type, qname):
                outcome = 'udp_reply' if probe_type is ProbeType.UDP else f'dns_{dns.rcode_name}'
                return Accept(view.src, view.sport, probe_type, family, outcome,
                              view.src, view.dport)
        return Reject(RejectReason.BAD_TOKEN)

    return Reject(RejectReason.UNPARSEABLE)


def _verify_error(view: PacketView, secret: ScanSecret, qname: Optional[str],
                  expected: Optional[ProbeType]) -> VerifyResult:
    inner = view.inner
    if inner is None or inner.family is not view.family:
        return Reject(RejectReason.UNPARSEABLE)
    family = inner.family
    outcome = view.error_subtype

    if inner.kind is ReplyKind.ICMP_ECHO_REQUEST:
        if inner.icmp_id < 0:
            return Reject(RejectReason.UNPARSEABLE)
        fields = probe_fields(secret, inner.dst, 0, ProbeType.ICMP_ECHO, family)
        if (inner.icmp_id, inner.icmp_seq) != (fields.icmp_id, fields.icmp_seq):
            return Reject(RejectReason.BAD_TOKEN)
        return Accept(inner.dst, 0, ProbeType.ICMP_ECHO, family, outcome, view.src, 0)

    if inner.kind is ReplyKind.TCP:
        if not _is_local_port(inner.sport):
            return Reject(RejectReason.FOREIGN_PORT)
        fields = probe_fields(secret, inner.dst, inner.dport, ProbeType.TCP_SYN, family)
        if fields.sport != inner.sport or fields.tcp_seq != inner.tcp_seq:
            return Reject(RejectReason.BAD_TOKEN)
        return Accept(inner.dst, inner.dport, ProbeType.TCP_SYN, family, outcome,
                      view.src, inner.sport)

    if inner.kind in (ReplyKind.UDP, ReplyKind.DNS):
        if not _is_local_port(inner.sport):
            return Reject(RejectReason.FOREIGN_PORT)
        # v4 quotes stop after the UDP header, so the DNS fields may be absent.
        for probe_type in _prefer((ProbeType.DNS, ProbeType.DNS_VERSION, ProbeType.UDP), expected):
            fields = probe_fields(secret, inner.dst, inner.dport, probe_type, family)
            if fields.sport != inner.sport:
                continue
            dns = inner.dns
            if dns is not None and probe_type is not ProbeType.UDP:
                if dns.txid != fields.txid or dns.is_response:
                    continue
                if probe_type is ProbeType.DNS_VERSION and dns.qclass != DNS_CLASS_CH:
                    continue
                if probe_type is ProbeType.DNS and qname is not None and not _same_name(dns.qname, qname):
                    continue
            return Accept(inner.dst, inner.dport, probe_type, family, outcome,
                          view.src, inner.sport)
        return Reject(RejectReason.BAD_TOKEN)

    return Reject(RejectReason.UNPARSEABLE)


def verify(reply: PacketView, secret: ScanSecret, qname: Optional[str] = None,
           expected: Optional[ProbeType] = None) -> VerifyResult:
    """
    Match a classified reply against the scan secret.

    Args:
        reply: output of parse_reply()
        secret: the scan's secret
        qname: the DNS probe's configured question name, if any
        expected: the scan's probe type, tried first when a reply fits several

    Returns:
        Accept with the probe's destination, port and outcome, or Reject.
    """
    if reply.family is None:
        return Reject(RejectReason.UNPARSEABLE)
    if reply.kind is ReplyKind.ICMP_ERROR:
        return _verify_error(reply, secret, qname, expected)
    return _verify_direct(reply, secret, qname, expected)
