"""
Hexmap Network Scanner
======================
Stateless, randomized IPv4/IPv6 probing of structured address spaces.

Submodules:
- address_space: target expressions, identifiers, ports and address composition
- number_theory: primality, factorization and primitive roots
- permutation: full-cycle permutation and sharding
- packets: byte-exact probe construction and reply parsing
- validation: keyed probe tokens and reply verification
- filters: allowlist/blocklist trie and excluded-space accounting
- rate_control: token bucket and bandwidth conversion
- probe_modules: icmp_echo, tcp_syn, udp, dns, dns_version
- transport / interfaces: raw sockets, dry-run capture, interface discovery
- engine: the scan loop
- output: TXT/CSV/JSONL result sinks
- cli: command-line entry point
- sim: simulated network for tests
"""

from .address_space import (
    Family, IdentifierSpec, PortSet, TargetSpec, compose_address, decompose_address,
    parse_ports, parse_target, space_size,
)
from .engine import ScanConfig, ScanStats, progress_report, run_scan
from .errors import ConfigError, HexmapError, ScanAborted
from .filters import PrefixFilter, build_filter, count_excluded, load_prefixes
from .permutation import Shard, cycle_next, make_cycle_params, shard_init
from .probe_modules import PROBE_MODULES, get_probe_module
from .rate_control import RatePolicy, TokenBucket, bps_to_pps, tokens_acquire
from .validation import ScanSecret, derive_token, embed, verify

__version__ = '0.1.0'

__all__ = [
    'Family',
    'IdentifierSpec',
    'PortSet',
    'TargetSpec',
    'compose_address',
    'decompose_address',
    'parse_ports',
    'parse_target',
    'space_size',
    'ScanConfig',
    'ScanStats',
    'progress_report',
    'run_scan',
    'ConfigError',
    'HexmapError',
    'ScanAborted',
    'PrefixFilter',
    'build_filter',
    'count_excluded',
    'load_prefixes',
    'Shard',
    'cycle_next',
    'make_cycle_params',
    'shard_init',
    'PROBE_MODULES',
    'get_probe_module',
    'RatePolicy',
    'TokenBucket',
    'bps_to_pps',
    'tokens_acquire',
    'ScanSecret',
    'derive_token',
    'embed',
    'verify',
]
