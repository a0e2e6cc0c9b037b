"""
Simulated Network
=================
In-process Transport for end-to-end scans without privileges.

Every frame sent is recorded in the SendLog, matched against the responder
rules and, unless lost, answered with a well-formed reply built by the
packet codecs. Replies become receivable once the shared clock reaches
send time + latency. Loss and latency draws are keyed hashes of the seed
and the probe bytes, so a run is reproducible regardless of thread timing.

Usage:
    harness = harness_build(parse_rules('* -> echo_reply'), seed=7)
    stats = run_scan(config, harness.transport, sink, clock=harness.clock)
    assert len(harness.log) == stats.sent
"""

import hashlib
import heapq
import logging
import struct
import threading
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..address_space import Family, parse_address
from ..clock import SimulatedClock
from ..config import DEFAULT_SOURCE_V4, DEFAULT_SOURCE_V6, EPHEMERAL_BASE, EPHEMERAL_RANGE
from ..packets.headers import FrameTemplate, strip_ethernet
from ..packets.parse import PacketView, ReplyKind, parse_reply
from ..packets.probes import (
    DNS_CLASS_CH, TCP_ACK, TCP_RST, TCP_SYN, build_dns_response, build_icmp_echo,
    build_icmp_error, build_tcp, build_udp, encode_txt,
)
from ..transport import Transport
from ..validation import ProbeType
from .rules import Behavior, ResponderRule, first_match

logger = logging.getLogger(__name__)

_ICMP_ERRORS = {
    Family.V4: {
        'unreach_noroute': (3, 0), 'unreach_addr': (3, 1), 'unreach_other': (3, 2),
        'unreach_port': (3, 3), 'packet_too_big': (3, 4), 'unreach_admin': (3, 13),
        'time_exceeded': (11, 0),
    },
    Family.V6: {
        'unreach_noroute': (1, 0), 'unreach_admin': (1, 1), 'unreach_addr': (1, 3),
        'unreach_port': (1, 4), 'unreach_other': (1, 5), 'packet_too_big': (2, 0),
        'time_exceeded': (3, 0),
    },
}

MIN_IPV6_MTU = 1280


@dataclass(frozen=True)
class SendRecord:
    timestamp: float
    frame: bytes
    family: Optional[Family]
    dst: int
    dport: int
    probe_type: Optional[ProbeType]


class SendLog:
    """Append-only record of every frame handed to the transport."""

    def __init__(self):
        self._records: List[SendRecord] = []
        self._lock = threading.Lock()

    def append(self, record: SendRecord):
        with self._lock:
            self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(list(self._records))

    @property
    def records(self) -> List[SendRecord]:
        with self._lock:
            return list(self._records)

    def tuples(self) -> List[Tuple[int, int]]:
        return [(r.dst, r.dport) for r in self.records]

    def destinations(self) -> List[int]:
        return [r.dst for r in self.records]

    def frames(self) -> List[bytes]:
        return [r.frame for r in self.records]


def probe_type_of(view: PacketView) -> Optional[ProbeType]:
    if view.kind is ReplyKind.ICMP_ECHO_REQUEST:
        return ProbeType.ICMP_ECHO
    if view.kind is ReplyKind.TCP:
        return ProbeType.TCP_SYN
    if view.kind is ReplyKind.DNS:
        return ProbeType.DNS_VERSION if view.dns.qclass == DNS_CLASS_CH else ProbeType.DNS
    if view.kind is ReplyKind.UDP:
        return ProbeType.UDP
    return None


def _draw(seed: int, data: bytes, label: bytes) -> float:
    """Uniform [0, 1) keyed by seed and probe bytes."""
    digest = hashlib.blake2b(data, digest_size=8, key=(seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, 'big'),
                             person=label).digest()
    return int.from_bytes(digest, 'big') / float(1 << 64)


def _answer_records(view: PacketView, records: Sequence[str]):
    answers = []
    for text in records:
        if view.dns.qclass == DNS_CLASS_CH:
            answers.append((16, encode_txt(text)))
        elif ':' in text:
            answers.append((28, parse_address(text, Family.V6).to_bytes(16, 'big')))
        else:
            answers.append((1, parse_address(text, Family.V4).to_bytes(4, 'big')))
    return answers


class SimTransport(Transport):
    """Virtual network answering probes according to responder rules."""

    def __init__(self, rules: Sequence[ResponderRule], seed: int = 0, clock=None):
        self.rules = list(rules)
        self.seed = seed
        self.clock = clock or SimulatedClock()
        self.log = SendLog()
        self.delivered: List[bytes] = []
        self.lost = 0
        self._queue: List[Tuple[float, int, bytes]] = []
        self._counter = 0
        self._cond = threading.Condition()
        self.closed = False

    # -- reply construction --------------------------------------------

    def _reply(self, rule: ResponderRule, view: PacketView, packet: bytes,
               probe_type: ProbeType) -> Optional[bytes]:
        family = view.family
        host = FrameTemplate(family, view.dst)
        behavior = rule.behavior
        if behavior is Behavior.ECHO_REPLY and probe_type is ProbeType.ICMP_ECHO:
            return build_icmp_echo(host, view.src, view.icmp_id, view.icmp_seq, view.payload, reply=True)
        if behavior is Behavior.SYN_ACK and probe_type is ProbeType.TCP_SYN:
            isn = int(_draw(self.seed, packet, b'hexmap-isn') * (1 << 32))
            return build_tcp(host, view.src, view.dport, view.sport, isn,
                             ack=view.tcp_seq + 1, flags=TCP_SYN | TCP_ACK)
        if behavior is Behavior.RST and probe_type is ProbeType.TCP_SYN:
            return build_tcp(host, view.src, view.dport, view.sport, 0,
                             ack=view.tcp_seq + 1, flags=TCP_RST | TCP_ACK, window=0)
        if behavior is Behavior.DNS_ANSWER and view.dns is not None:
            message = build_dns_response(view.dns.txid, view.dns.qname, view.dns.qtype,
                                         view.dns.qclass, rule.rcode, _answer_records(view, rule.records))
            return build_udp(host, view.src, view.dport, view.sport, message)
        if behavior is Behavior.UDP_REPLY and view.kind in (ReplyKind.UDP, ReplyKind.DNS):
            return build_udp(host, view.src, view.dport, view.sport, rule.payload)
        if behavior is Behavior.ICMP_ERROR:
            icmp_type, code = _ICMP_ERRORS[family][rule.error]
            router = FrameTemplate(family, rule.error_source if rule.error_source is not None else view.dst)
            mtu = MIN_IPV6_MTU if rule.error == 'packet_too_big' else 0
            return build_icmp_error(router, view.src, icmp_type, code, packet, mtu=mtu)
        return None

    # -- Transport -----------------------------------------------------

    def send(self, frame: bytes):
        now = self.clock.now()
        stripped = strip_ethernet(frame)
        packet = stripped[1] if stripped else b''
        view = parse_reply(packet)
        probe_type = probe_type_of(view)
        dport = view.dport if view.dport >= 0 else 0
        self.log.append(SendRecord(now, bytes(frame), view.family, view.dst, dport, probe_type))
        if view.family is None or probe_type is None:
            return
        rule = first_match(self.rules, view.family, view.dst, dport, probe_type)
        if rule is None or rule.behavior is Behavior.SILENT:
            return
        if rule.loss and _draw(self.seed, packet, b'hexmap-loss') < rule.loss:
            self.lost += 1
            return
        reply = self._reply(rule, view, packet, probe_type)
        if reply is None:
            return
        lo, hi = rule.latency_ms
        latency = lo + (hi - lo) * _draw(self.seed, packet, b'hexmap-delay')
        self.delivered.append(reply)
        self.deliver(reply, latency / 1000.0, now)

    def deliver(self, packet: bytes, delay: float = 0.0, at: Optional[float] = None):
        """Queue an L3 packet for the receiver, due ``delay`` seconds from ``at`` (default now)."""
        due = (self.clock.now() if at is None else at) + delay
        with self._cond:
            self._counter += 1
            heapq.heappush(self._queue, (due, self._counter, bytes(packet)))
            self._cond.notify_all()

    def _pop_due(self) -> Optional[bytes]:
        if self._queue and self._queue[0][0] <= self.clock.now():
            return heapq.heappop(self._queue)[2]
        return None

    def receive(self, timeout: float) -> Optional[bytes]:
        with self._cond:
            packet = self._pop_due()
            if packet is None and timeout > 0 and not self.closed:
                self._cond.wait(timeout)
                packet = self._pop_due()
            return packet

    @property
    def pending(self) -> int:
        with self._cond:
            return len(self._queue)

    def close(self):
        with self._cond:
            self.closed = True
            self._cond.notify_all()


@dataclass
class SimHarness:
    transport: SimTransport
    log: SendLog
    clock: SimulatedClock
    rules: List[ResponderRule] = field(default_factory=list)


def harness_build(rules: Sequence[ResponderRule], seed: int = 0,
                  clock: Optional[SimulatedClock] = None) -> SimHarness:
    """Simulated transport, its send log and the clock scans must share with it."""
    clock = clock or SimulatedClock()
    transport = SimTransport(rules, seed, clock)
    logger.debug(f"Simulated network with {len(rules)} rule(s), seed {seed}")
    return SimHarness(transport, transport.log, clock, list(rules))


def _random_addresses(rng: np.random.Generator, family: Family, n: int) -> List[int]:
    raw = rng.bytes(n * (4 if family is Family.V4 else 16))
    step = 4 if family is Family.V4 else 16
    return [int.from_bytes(raw[i:i + step], 'big') for i in range(0, len(raw), step)]


def inject_forgeries(transport: SimTransport, n: int, seed: int, kind: str = 'tcp',
                     family: Family = Family.V4, local_addr: Optional[int] = None,
                     qname: str = 'example.com', sources: Optional[Sequence[int]] = None) -> int:
    """
    Deliver n syntactically valid replies carrying random validation fields.

    Args:
        transport: simulated transport to deliver into
        n: number of forgeries
        seed: numpy generator seed
        kind: tcp, icmp, udp, dns, truncated, or replay (copies of genuine
            replies already delivered by the simulator)
        family: address family of the forged packets
        local_addr: destination of the forgeries (the scanner's address)
        qname: question name for dns forgeries
        sources: forged source addresses to draw from; random when omitted

    Returns:
        Number of packets delivered.
    """
    rng = np.random.default_rng(seed)
    if kind == 'replay':
        genuine = list(transport.delivered)
        if not genuine:
            return 0
        for i in rng.integers(0, len(genuine), size=n):
            transport.deliver(genuine[int(i)])
        return n

    if local_addr is None:
        local_addr = parse_address(DEFAULT_SOURCE_V4 if family is Family.V4 else DEFAULT_SOURCE_V6, family)
    if sources is not None:
        pool = np.asarray(list(sources), dtype=object)
        srcs = [int(x) for x in pool[rng.integers(0, len(pool), size=n)]]
    else:
        srcs = _random_addresses(rng, family, n)
    sports = rng.integers(1, 1 << 16, size=n)
    dports = rng.integers(EPHEMERAL_BASE, EPHEMERAL_BASE + EPHEMERAL_RANGE, size=n)
    words = rng.integers(0, 1 << 32, size=(n, 2), dtype=np.uint64)
    cut = rng.integers(1, 40, size=n)

    for i in range(n):
        host = FrameTemplate(family, srcs[i])
        sport, dport = int(sports[i]), int(dports[i])
        a, b = int(words[i, 0]), int(words[i, 1])
        if kind in ('tcp', 'truncated'):
            packet = build_tcp(host, local_addr, sport, dport, a, ack=b, flags=TCP_SYN | TCP_ACK)
            if kind == 'truncated':
                packet = packet[:int(cut[i])]
        elif kind == 'icmp':
            packet = build_icmp_echo(host, local_addr, a >> 16, a & 0xFFFF, reply=True)
        elif kind == 'udp':
            packet = build_udp(host, local_addr, sport, dport, struct.pack('!I', a))
        elif kind == 'dns':
            message = build_dns_response(a & 0xFFFF, qname, 'A' if family is Family.V4 else 'AAAA')
            packet = build_udp(host, local_addr, 53, dport, message)
        else:
            raise ValueError(f"Unknown forgery kind {kind!r}")
        transport.deliver(packet)
    return n
