"""
Packet Codecs
=============
Byte-exact construction and parsing of Ethernet, IPv4, IPv6, ICMP,
ICMPv6, TCP, UDP and DNS.

Submodules:
- checksum: RFC 1071 checksum and pseudo-headers
- headers: FrameTemplate, Ethernet/IPv4/IPv6 headers
- probes: probe and reply builders (echo, SYN, UDP, DNS, ICMP errors)
- parse: total, structural reply parsing into PacketView
"""

from .checksum import internet_checksum, transport_checksum
from .headers import (
    FrameTemplate, build_ethernet, build_ipv4_header, build_ipv6_header,
    parse_mac, strip_ethernet,
)
from .probes import (
    build_dns_query, build_dns_response, build_icmp_echo, build_icmp_error,
    build_tcp, build_tcp_syn, build_udp, build_version_bind_query, encode_qname,
)
from .parse import DnsInfo, PacketView, ReplyKind, parse_dns, parse_reply

__all__ = [
    'internet_checksum',
    'transport_checksum',
    'FrameTemplate',
    'build_ethernet',
    'build_ipv4_header',
    'build_ipv6_header',
    'parse_mac',
    'strip_ethernet',
    'build_dns_query',
    'build_dns_response',
    'build_icmp_echo',
    'build_icmp_error',
    'build_tcp',
    'build_tcp_syn',
    'build_udp',
    'build_version_bind_query',
    'encode_qname',
    'DnsInfo',
    'PacketView',
    'ReplyKind',
    'parse_dns',
    'parse_reply',
]
