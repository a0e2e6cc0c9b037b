"""
Local interface discovery: default interface, MACs and source address.

Reads the Linux /proc and /sys tables. Every lookup can be overridden from
the command line; dry-run and simulated scans fall back to documentation
addresses and zero MACs.
"""

import logging
import socket
from pathlib import Path
from typing import Optional

from .address_space import Family, format_address, parse_address
from .config import DEFAULT_SOURCE_V4, DEFAULT_SOURCE_V6, DEFAULT_TTL
from .errors import ConfigError, HexmapError
from .packets.headers import ZERO_MAC, FrameTemplate, format_mac, parse_mac

logger = logging.getLogger(__name__)

PROC_ROUTE = Path('/proc/net/route')
PROC_IPV6_ROUTE = Path('/proc/net/ipv6_route')
PROC_ARP = Path('/proc/net/arp')
SYS_CLASS_NET = Path('/sys/class/net')


def _read_lines(path: Path):
    try:
        return path.read_text().splitlines()
    except OSError as e:
        logger.debug(f"Cannot read {path}: {e}")
        return []


def default_interface(family: Family) -> Optional[str]:
    """Interface of the default route, or None."""
    if family is Family.V4:
        for line in _read_lines(PROC_ROUTE)[1:]:
            cols = line.split()
            if len(cols) >= 3 and cols[1] == '00000000':
                return cols[0]
        return None
    for line in _read_lines(PROC_IPV6_ROUTE):
        cols = line.split()
        if len(cols) >= 10 and cols[0] == '0' * 32 and cols[1] == '00' and cols[9] != 'lo':
            return cols[9]
    return None


def default_gateway_v4(iface: str) -> Optional[int]:
    for line in _read_lines(PROC_ROUTE)[1:]:
        cols = line.split()
        if len(cols) >= 3 and cols[0] == iface and cols[1] == '00000000':
            # /proc/net/route stores addresses little-endian.
            return int.from_bytes(bytes.fromhex(cols[2]), 'little')
    return None


def interface_mac(iface: str) -> Optional[bytes]:
    lines = _read_lines(SYS_CLASS_NET / iface / 'address')
    if not lines:
        return None
    try:
        return parse_mac(lines[0].strip())
    except HexmapError:
        return None


def gateway_mac(iface: str, gateway: int) -> Optional[bytes]:
    """Neighbour MAC of an IPv4 gateway from the ARP cache."""
    wanted = format_address(Family.V4, gateway)
    for line in _read_lines(PROC_ARP)[1:]:
        cols = line.split()
        if len(cols) >= 6 and cols[0] == wanted and cols[5] == iface:
            try:
                return parse_mac(cols[3])
            except HexmapError:
                return None
    return None


def source_address(family: Family, toward: int) -> Optional[int]:
    """Address the kernel would use to reach ``toward`` (connected UDP socket, nothing sent)."""
    af = socket.AF_INET if family is Family.V4 else socket.AF_INET6
    try:
        with socket.socket(af, socket.SOCK_DGRAM) as sock:
            sock.connect((format_address(family, toward), 9))
            return parse_address(sock.getsockname()[0].split('%')[0], family)
    except (OSError, HexmapError) as e:
        logger.debug(f"No route to {format_address(family, toward)}: {e}")
        return None


def resolve_template(family: Family, toward: int,
                     iface: Optional[str] = None,
                     source: Optional[str] = None,
                     source_mac: Optional[str] = None,
                     gw_mac: Optional[str] = None,
                     ttl: int = DEFAULT_TTL,
                     discover: bool = True) -> FrameTemplate:
    """
    Assemble the outbound FrameTemplate.

    Args:
        family: scan family
        toward: a target address, used for source address discovery
        iface, source, source_mac, gw_mac: explicit overrides
        ttl: IPv4 TTL / IPv6 hop limit
        discover: consult the system tables; False for dry-run and simulation

    Raises:
        ConfigError: if a live scan cannot determine a required value
    """
    if source is not None:
        src_addr = parse_address(source, family)
    elif discover:
        src_addr = source_address(family, toward)
        if src_addr is None:
            raise ConfigError(f"Cannot determine a {family.value} source address; pass -S")
    else:
        src_addr = parse_address(DEFAULT_SOURCE_V4 if family is Family.V4 else DEFAULT_SOURCE_V6, family)

    src_mac = parse_mac(source_mac) if source_mac else None
    dst_mac = parse_mac(gw_mac) if gw_mac else None
    if discover:
        iface = iface or default_interface(family)
        if iface is None:
            raise ConfigError("No default route; pass -i")
        if src_mac is None:
            src_mac = interface_mac(iface)
        if dst_mac is None and family is Family.V4:
            gateway = default_gateway_v4(iface)
            if gateway is not None:
                dst_mac = gateway_mac(iface, gateway)
        if dst_mac is None:
            raise ConfigError(f"Cannot determine the gateway MAC on {iface}; pass -G")
        logger.info(f"Sending from {format_address(family, src_addr)} on {iface} "
                    f"({format_mac(src_mac or ZERO_MAC)} -> {format_mac(dst_mac)})")
    return FrameTemplate(family, src_addr, src_mac or ZERO_MAC, dst_mac or ZERO_MAC, ttl)
