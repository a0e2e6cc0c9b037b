"""
RFC 1071 Internet checksum and the IPv4/IPv6 pseudo-headers.
"""

import struct


def ones_complement_sum(data: bytes, initial: int = 0) -> int:
    """16-bit one's-complement sum of data (odd length zero-padded)."""
    if len(data) % 2:
        data = data + b'\x00'
    total = initial + sum(struct.unpack(f'!{len(data) // 2}H', data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def internet_checksum(data: bytes, initial: int = 0) -> int:
    """One's complement of the one's-complement sum."""
    return ~ones_complement_sum(data, initial) & 0xFFFF


def pseudo_header_v4(src: int, dst: int, protocol: int, length: int) -> bytes:
    return struct.pack('!IIBBH', src, dst, 0, protocol, length)


def pseudo_header_v6(src: int, dst: int, next_header: int, length: int) -> bytes:
    return (src.to_bytes(16, 'big') + dst.to_bytes(16, 'big')
            + struct.pack('!I3xB', length, next_header))


def transport_checksum(version: int, src: int, dst: int, protocol: int, segment: bytes) -> int:
    """Checksum of an L4 segment including the family's pseudo-header."""
    if version == 4:
        pseudo = pseudo_header_v4(src, dst, protocol, len(segment))
    else:
        pseudo = pseudo_header_v6(src, dst, protocol, len(segment))
    return internet_checksum(pseudo + segment)
