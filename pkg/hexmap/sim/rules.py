"""
Responder rules for the simulated network.

A rule pairs a predicate over (destination address, destination port,
probe type) with a behaviour, a latency range and a loss probability.
The first matching rule wins; unmatched probes get no reply.

Text format, one rule per line (``#`` comments):

    dst=2001:db8::/112 suffix=0x01/8 -> echo_reply latency=5 loss=0.1
    port=80,443 type=tcp_syn -> syn_ack latency=1-20
    dst=10.0.0.0/8 -> icmp_error error=unreach_admin error_source=10.255.0.1
    type=dns -> dns_answer rcode=noerror records=192.0.2.7,192.0.2.8
    * -> silent
"""

import enum
import ipaddress
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, List, Optional, Tuple, Union

from ..address_space import Family
from ..errors import ConfigError
from ..probe_modules import ERROR_OUTCOMES
from ..validation import ProbeType


class Behavior(enum.Enum):
    ECHO_REPLY = 'echo_reply'
    SYN_ACK = 'syn_ack'
    RST = 'rst'
    DNS_ANSWER = 'dns_answer'
    ICMP_ERROR = 'icmp_error'
    UDP_REPLY = 'udp_reply'
    SILENT = 'silent'


RCODES = {'noerror': 0, 'formerr': 1, 'servfail': 2, 'nxdomain': 3, 'notimp': 4, 'refused': 5}

_PROBE_TYPES = {
    'icmp_echo': ProbeType.ICMP_ECHO,
    'tcp_syn': ProbeType.TCP_SYN,
    'udp': ProbeType.UDP,
    'dns': ProbeType.DNS,
    'dns_version': ProbeType.DNS_VERSION,
}


@dataclass(frozen=True)
class ResponderRule:
    behavior: Behavior = Behavior.SILENT
    networks: Tuple[Tuple[Family, int, int], ...] = ()
    suffix_bits: int = 0
    suffix_value: int = 0
    addresses: Optional[FrozenSet[int]] = None
    ports: Optional[FrozenSet[int]] = None
    probe_types: Optional[FrozenSet[ProbeType]] = None
    rcode: int = 0
    records: Tuple[str, ...] = ()
    error: str = 'unreach_port'
    payload: bytes = b''
    latency_ms: Tuple[float, float] = (0.0, 0.0)
    loss: float = 0.0
    error_source: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise ConfigError(f"Loss probability {self.loss} outside [0, 1]")
        lo, hi = self.latency_ms
        if lo < 0 or hi < lo:
            raise ConfigError(f"Bad latency range {lo}-{hi} ms")
        if self.behavior is Behavior.ICMP_ERROR and self.error not in ERROR_OUTCOMES:
            raise ConfigError(f"Unknown ICMP error {self.error!r}; valid: {', '.join(ERROR_OUTCOMES)}")

    def matches(self, family: Family, dst: int, dport: int, probe_type: ProbeType) -> bool:
        if self.probe_types is not None and probe_type not in self.probe_types:
            return False
        if self.ports is not None and dport not in self.ports:
            return False
        if self.networks:
            width = family.width
            if not any(net_family is family and (dst >> (width - plen) if plen else 0) == net
                       for net_family, net, plen in self.networks):
                return False
        if self.suffix_bits and dst & ((1 << self.suffix_bits) - 1) != self.suffix_value:
            return False
        if self.addresses is not None and dst not in self.addresses:
            return False
        return True


def first_match(rules, family: Family, dst: int, dport: int,
                probe_type: ProbeType) -> Optional[ResponderRule]:
    for rule in rules:
        if rule.matches(family, dst, dport, probe_type):
            return rule
    return None


def _network(text: str) -> Tuple[Family, int, int]:
    net = ipaddress.ip_network(text, strict=False)
    family = Family.V4 if net.version == 4 else Family.V6
    return family, int(net.network_address) >> (family.width - net.prefixlen), net.prefixlen


def _latency(text: str) -> Tuple[float, float]:
    lo, dash, hi = text.partition('-')
    return (float(lo), float(hi) if dash else float(lo))


def _address_int(text: str) -> int:
    return int(ipaddress.ip_address(text))


def parse_rule(line: str) -> Optional[ResponderRule]:
    text = line.split('#', 1)[0].strip()
    if not text:
        return None
    match_text, arrow, action_text = text.partition('->')
    if not arrow:
        raise ConfigError(f"Missing '->' in rule {text!r}")
    kwargs = {}
    networks = []
    for token in match_text.split():
        if token == '*':
            continue
        key, eq, value = token.partition('=')
        if not eq:
            raise ConfigError(f"Bad match term {token!r}")
        if key == 'dst':
            networks.extend(_network(v) for v in value.split(','))
        elif key == 'suffix':
            number, slash, bits = value.partition('/')
            kwargs['suffix_value'] = int(number, 0)
            kwargs['suffix_bits'] = int(bits) if slash else 8
        elif key == 'port':
            kwargs['ports'] = frozenset(int(p) for p in value.split(','))
        elif key == 'type':
            try:
                kwargs['probe_types'] = frozenset(_PROBE_TYPES[t] for t in value.split(','))
            except KeyError as e:
                raise ConfigError(f"Unknown probe type {e.args[0]!r}") from None
        else:
            raise ConfigError(f"Unknown match key {key!r}")
    if networks:
        kwargs['networks'] = tuple(networks)

    action = action_text.split()
    if not action:
        raise ConfigError(f"Missing behaviour in rule {text!r}")
    try:
        kwargs['behavior'] = Behavior(action[0])
    except ValueError:
        raise ConfigError(f"Unknown behaviour {action[0]!r}") from None
    for token in action[1:]:
        key, eq, value = token.partition('=')
        if not eq:
            raise ConfigError(f"Bad option {token!r}")
        if key == 'latency':
            kwargs['latency_ms'] = _latency(value)
        elif key == 'loss':
            kwargs['loss'] = float(value)
        elif key == 'rcode':
            kwargs['rcode'] = RCODES[value] if value in RCODES else int(value)
        elif key == 'records':
            kwargs['records'] = tuple(r for r in value.split(',') if r)
        elif key == 'error':
            kwargs['error'] = value
        elif key == 'error_source':
            kwargs['error_source'] = _address_int(value)
        elif key == 'payload':
            kwargs['payload'] = bytes.fromhex(value)
        else:
            raise ConfigError(f"Unknown option {key!r}")
    return ResponderRule(**kwargs)


def parse_rules(text: str) -> List[ResponderRule]:
    """Parse a rule fixture; errors name the offending line."""
    rules = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        try:
            rule = parse_rule(line)
        except (ConfigError, ValueError) as e:
            raise ConfigError(f"line {line_number}: {e}") from None
        if rule is not None:
            rules.append(rule)
    return rules


def load_rules(path: Union[str, Path]) -> List[ResponderRule]:
    return parse_rules(Path(path).read_text())
