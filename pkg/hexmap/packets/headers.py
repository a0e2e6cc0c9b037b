"""
Ethernet, IPv4 and IPv6 header construction.

Probes are minimal single-fragment packets: no IPv4 options, no IPv6
extension headers.
"""

import struct
from dataclasses import dataclass
from typing import Optional, Tuple

from ..address_space import Family
from ..errors import CodecError
from .checksum import internet_checksum

ETHERNET_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ICMPV6 = 58

DEFAULT_IP_ID = 54321
ZERO_MAC = b'\x00' * 6


def parse_mac(text: str) -> bytes:
    """``aa:bb:cc:dd:ee:ff`` (or with dashes) to 6 bytes."""
    parts = text.replace('-', ':').split(':')
    try:
        raw = bytes(int(p, 16) for p in parts)
    except ValueError:
        raise CodecError(f"Malformed MAC address {text!r}") from None
    if len(raw) != 6:
        raise CodecError(f"Malformed MAC address {text!r}")
    return raw


def format_mac(raw: bytes) -> str:
    return ':'.join(f'{b:02x}' for b in raw)


@dataclass(frozen=True)
class FrameTemplate:
    """Per-scan constant parts of every outbound frame."""

    family: Family
    src_addr: int
    src_mac: bytes = ZERO_MAC
    dst_mac: bytes = ZERO_MAC
    ttl: int = 64

    def __post_init__(self):
        if not 0 <= self.src_addr < (1 << self.family.width):
            raise CodecError(f"Source address does not fit the {self.family.value} family")
        if len(self.src_mac) != 6 or len(self.dst_mac) != 6:
            raise CodecError("MAC addresses must be 6 bytes")
        if not 0 <= self.ttl <= 255:
            raise CodecError(f"TTL {self.ttl} outside [0, 255]")


def build_ipv4_header(template: FrameTemplate, dst: int, protocol: int,
                      payload_len: int, ident: int = DEFAULT_IP_ID) -> bytes:
    total = 20 + payload_len
    if payload_len < 0 or total > 0xFFFF:
        raise CodecError(f"IPv4 payload of {payload_len} bytes does not fit")
    header = struct.pack('!BBHHHBBHII', 0x45, 0, total, ident, 0,
                         template.ttl, protocol, 0, template.src_addr, dst)
    checksum = internet_checksum(header)
    return header[:10] + struct.pack('!H', checksum) + header[12:]


def build_ipv6_header(template: FrameTemplate, dst: int, next_header: int,
                      payload_len: int) -> bytes:
    if not 0 <= payload_len <= 0xFFFF:
        raise CodecError(f"IPv6 payload of {payload_len} bytes does not fit")
    return (struct.pack('!IHBB', 6 << 28, payload_len, next_header, template.ttl)
            + template.src_addr.to_bytes(16, 'big') + dst.to_bytes(16, 'big'))


def build_ip_header(template: FrameTemplate, dst: int, protocol: int, payload_len: int) -> bytes:
    if template.family is Family.V4:
        return build_ipv4_header(template, dst, protocol, payload_len)
    return build_ipv6_header(template, dst, protocol, payload_len)


def build_ethernet(template: FrameTemplate, packet: bytes) -> bytes:
    ethertype = ETHERTYPE_IPV4 if template.family is Family.V4 else ETHERTYPE_IPV6
    return template.dst_mac + template.src_mac + struct.pack('!H', ethertype) + packet


def strip_ethernet(frame: bytes) -> Optional[Tuple[int, bytes]]:
    """``(ethertype, l3 bytes)`` or None for runt frames."""
    if len(frame) < ETHERNET_HEADER_LEN:
        return None
    ethertype = struct.unpack_from('!H', frame, 12)[0]
    return ethertype, frame[ETHERNET_HEADER_LEN:]
