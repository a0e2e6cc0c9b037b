"""
Packet Transports
=================
The engine sends complete Ethernet frames and receives L3 packets through a
Transport. Implementations:
- RawSocketTransport: Linux AF_PACKET socket on one interface
- DryRunTransport: captures frames instead of sending them
- hexmap.sim.harness.SimTransport: in-process virtual network

Usage:
    with RawSocketTransport('eth0', Family.V6) as transport:
        transport.send(frame)
        packet = transport.receive(timeout=0.01)
"""

import logging
import select
import socket
import threading
from abc import ABC, abstractmethod
from collections import deque
from typing import List, Optional

from .address_space import Family
from .errors import TransportError
from .packets.headers import ETHERTYPE_IPV4, ETHERTYPE_IPV6, strip_ethernet

logger = logging.getLogger(__name__)

_PACKET_OUTGOING = 4
_RECV_BUFFER = 65535


class Transport(ABC):
    """Frame sink and L3 packet source shared by sender threads and the receiver."""

    @abstractmethod
    def send(self, frame: bytes):
        """Send one Ethernet frame; raises TransportError on failure."""

    @abstractmethod
    def receive(self, timeout: float) -> Optional[bytes]:
        """Next received L3 packet, or None after at most ``timeout`` seconds."""

    def take_captured(self) -> List[bytes]:
        """Frames captured instead of sent, oldest first; empty unless dry-run."""
        return []

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class RawSocketTransport(Transport):
    """
    AF_PACKET transport. Needs CAP_NET_RAW (usually root).

    Receives only the scan family's ethertype and drops our own outgoing
    frames.
    """

    def __init__(self, iface: str, family: Family):
        self.iface = iface
        self.family = family
        self.ethertype = ETHERTYPE_IPV4 if family is Family.V4 else ETHERTYPE_IPV6
        if not hasattr(socket, 'AF_PACKET'):
            raise TransportError("Raw packet sockets (AF_PACKET) are only available on Linux; use --dry-run")
        try:
            self.send_sock = socket.socket(socket.AF_PACKET, socket.SOCK_RAW)
            self.send_sock.bind((iface, 0))
            self.recv_sock = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(self.ethertype))
            self.recv_sock.bind((iface, 0))
            self.recv_sock.setblocking(False)
        except PermissionError as e:
            raise TransportError(
                f"Opening a raw socket on {iface} was denied ({e}); run as root or grant "
                f"CAP_NET_RAW, or use --dry-run"
            ) from e
        except OSError as e:
            raise TransportError(f"Cannot open raw socket on {iface}: {e}") from e
        self._send_lock = threading.Lock()
        logger.info(f"Raw transport open on {iface} ({family.value})")

    def send(self, frame: bytes):
        try:
            with self._send_lock:
                self.send_sock.send(frame)
        except OSError as e:
            raise TransportError(f"Send on {self.iface} failed: {e}") from e

    def receive(self, timeout: float) -> Optional[bytes]:
        try:
            ready, _, _ = select.select([self.recv_sock], [], [], timeout)
            if not ready:
                return None
            frame, address = self.recv_sock.recvfrom(_RECV_BUFFER)
        except BlockingIOError:
            return None
        except OSError as e:
            raise TransportError(f"Receive on {self.iface} failed: {e}") from e
        if len(address) > 2 and address[2] == _PACKET_OUTGOING:
            return None
        stripped = strip_ethernet(frame)
        if stripped is None or stripped[0] != self.ethertype:
            return None
        return stripped[1]

    def close(self):
        for sock in (self.send_sock, self.recv_sock):
            try:
                sock.close()
            except OSError:
                pass


class DryRunTransport(Transport):
    """Keeps every frame for the receiver to write out; never receives anything."""

    def __init__(self):
        self._captured = deque()
        self._closed = threading.Event()
        self.frames_captured = 0

    def send(self, frame: bytes):
        self._captured.append(bytes(frame))
        self.frames_captured += 1

    def receive(self, timeout: float) -> Optional[bytes]:
        if timeout > 0 and not self._captured:
            self._closed.wait(timeout)
        return None

    def take_captured(self) -> List[bytes]:
        frames = []
        while True:
            try:
                frames.append(self._captured.popleft())
            except IndexError:
                return frames

    def close(self):
        self._closed.set()
