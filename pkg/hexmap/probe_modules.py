"""
Probe Modules
=============
One class per probe type. A module knows how to build its probe from the
validation fields and which outcomes its replies can be classified into.

Modules:
- icmp_echo: ICMP / ICMPv6 echo request (option echo_time=1)
- tcp_syn: TCP SYN
- udp: UDP datagram (option payload=<hex>)
- dns: DNS query (options qname=, qtype=)
- dns_version: CHAOS TXT version.bind query

Usage:
    module = get_probe_module('dns', {'qname': 'example.com'})
    packet = module.build(template, dst, 53, fields)
"""

import struct
from typing import Dict, Optional, Tuple, Type

from .address_space import Family
from .errors import ConfigError
from .packets.headers import ETHERNET_HEADER_LEN, FrameTemplate
from .packets.parse import PacketView
from .packets.probes import (
    build_dns_query, build_icmp_echo, build_tcp_syn, build_udp,
    build_version_bind_query,
)
from .validation import ProbeFields, ProbeType

ERROR_OUTCOMES = (
    'unreach_noroute', 'unreach_admin', 'unreach_addr', 'unreach_port',
    'unreach_other', 'time_exceeded', 'packet_too_big',
)

DNS_OUTCOMES = (
    'dns_noerror', 'dns_formerr', 'dns_servfail', 'dns_nxdomain',
    'dns_notimp', 'dns_refused', 'dns_other',
)

DEFAULT_QNAME = 'example.com'


class ProbeModule:
    """Base class; subclasses set the class attributes and build()."""

    name = ''
    description = ''
    probe_type: ProbeType = ProbeType.ICMP_ECHO
    uses_ports = False
    default_ports: Optional[Tuple[int, ...]] = None
    outcomes: Tuple[str, ...] = ()
    option_names: Tuple[str, ...] = ()

    def __init__(self, options: Optional[Dict[str, str]] = None):
        options = dict(options or {})
        unknown = sorted(set(options) - set(self.option_names))
        if unknown:
            valid = ', '.join(self.option_names) or 'none'
            raise ConfigError(f"Unknown option(s) {', '.join(unknown)} for {self.name}; valid: {valid}")
        self.options = options

    @property
    def qname(self) -> Optional[str]:
        return None

    def build(self, template: FrameTemplate, dst: int, dport: int,
              fields: ProbeFields, send_time: float = 0.0) -> bytes:
        raise NotImplementedError

    def probe_bytes_on_wire(self, template: FrameTemplate) -> int:
        """Frame size including the Ethernet header, for bandwidth accounting."""
        sample = self.build(template, template.src_addr, self.default_ports[0] if self.default_ports else 0,
                            ProbeFields())
        return ETHERNET_HEADER_LEN + len(sample)

    def reply_payload(self, view: PacketView) -> bytes:
        return view.payload

    def rtt_ms(self, view: PacketView, now: float) -> Optional[float]:
        return None

    def normalize_outcome(self, outcome: str) -> str:
        if outcome in self.outcomes:
            return outcome
        if outcome.startswith('dns_') and 'dns_other' in self.outcomes:
            return 'dns_other'
        return outcome

    def describe(self) -> str:
        opts = ','.join(f"{k}={v}" for k, v in sorted(self.options.items()))
        return f"{self.name}({opts})" if opts else self.name


class IcmpEchoModule(ProbeModule):
    name = 'icmp_echo'
    description = 'ICMP/ICMPv6 echo request; id and sequence carry the token'
    probe_type = ProbeType.ICMP_ECHO
    outcomes = ('echo_reply',) + ERROR_OUTCOMES
    option_names = ('echo_time',)

    @property
    def echo_time(self) -> bool:
        return self.options.get('echo_time', '0').lower() in ('1', 'true', 'yes')

    def build(self, template, dst, dport, fields, send_time=0.0):
        payload = struct.pack('!d', send_time) if self.echo_time else b''
        return build_icmp_echo(template, dst, fields.icmp_id, fields.icmp_seq, payload)

    def rtt_ms(self, view, now):
        if not self.echo_time or len(view.payload) < 8:
            return None
        sent = struct.unpack('!d', view.payload[:8])[0]
        if not 0.0 <= now - sent < 3600.0:
            return None
        return round((now - sent) * 1000.0, 3)


class TcpSynModule(ProbeModule):
    name = 'tcp_syn'
    description = 'TCP SYN; sequence number and source port carry the token'
    probe_type = ProbeType.TCP_SYN
    uses_ports = True
    outcomes = ('synack', 'rst', 'tcp_other') + ERROR_OUTCOMES

    def build(self, template, dst, dport, fields, send_time=0.0):
        return build_tcp_syn(template, dst, fields.sport, dport, fields.tcp_seq)


class UdpModule(ProbeModule):
    name = 'udp'
    description = 'UDP datagram with a fixed payload; source port carries the token'
    probe_type = ProbeType.UDP
    uses_ports = True
    outcomes = ('udp_reply',) + ERROR_OUTCOMES
    option_names = ('payload',)

    def __init__(self, options=None):
        super().__init__(options)
        try:
            self.payload = bytes.fromhex(self.options.get('payload', ''))
        except ValueError:
            raise ConfigError(f"udp payload must be hex, got {self.options['payload']!r}") from None

    def build(self, template, dst, dport, fields, send_time=0.0):
        return build_udp(template, dst, fields.sport, dport, self.payload)


class DnsModule(ProbeModule):
    name = 'dns'
    description = 'DNS query; transaction id and source port carry the token'
    probe_type = ProbeType.DNS
    uses_ports = True
    default_ports = (53,)
    outcomes = DNS_OUTCOMES + ERROR_OUTCOMES
    option_names = ('qname', 'qtype')

    def __init__(self, options=None):
        super().__init__(options)
        self._qname = self.options.get('qname', DEFAULT_QNAME).rstrip('.') or DEFAULT_QNAME
        self._qtype = self.options.get('qtype')
        try:
            build_dns_query(self._qname, self._qtype or 'A', 0)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def qname(self) -> str:
        return self._qname

    def qtype_for(self, family: Family):
        if self._qtype is not None:
            return self._qtype
        return 'A' if family is Family.V4 else 'AAAA'

    def build(self, template, dst, dport, fields, send_time=0.0):
        query = build_dns_query(self.qname, self.qtype_for(template.family), fields.txid)
        return build_udp(template, dst, fields.sport, dport, query)

    def reply_payload(self, view):
        if view.dns is not None and view.dns.answers:
            return ','.join(view.dns.answers).encode('utf-8')
        return view.payload


class DnsVersionModule(ProbeModule):
    name = 'dns_version'
    description = 'CHAOS TXT version.bind query reporting the server software string'
    probe_type = ProbeType.DNS_VERSION
    uses_ports = True
    default_ports = (53,)
    outcomes = DNS_OUTCOMES + ERROR_OUTCOMES

    def build(self, template, dst, dport, fields, send_time=0.0):
        return build_udp(template, dst, fields.sport, dport, build_version_bind_query(fields.txid))

    def reply_payload(self, view):
        if view.dns is not None and view.dns.answers:
            return view.dns.answers[0].encode('utf-8')
        return b''


PROBE_MODULES: Dict[str, Type[ProbeModule]] = {
    cls.name: cls
    for cls in (IcmpEchoModule, TcpSynModule, UdpModule, DnsModule, DnsVersionModule)
}


def parse_probe_args(text: Optional[str]) -> Dict[str, str]:
    """``k=v,k2=v2`` into a dict."""
    options = {}
    for chunk in (text or '').split(','):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, eq, value = chunk.partition('=')
        if not eq or not key.strip():
            raise ConfigError(f"Probe argument {chunk!r} is not key=value")
        options[key.strip()] = value.strip()
    return options


def get_probe_module(name: str, options: Optional[Dict[str, str]] = None) -> ProbeModule:
    try:
        cls = PROBE_MODULES[name]
    except KeyError:
        raise ConfigError(
            f"Unknown probe module {name!r}; available: {', '.join(PROBE_MODULES)}"
        ) from None
    return cls(options)
