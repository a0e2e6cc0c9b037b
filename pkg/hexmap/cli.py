"""
Command-Line Interface
======================
Parses flags into a ScanConfig, prints the preamble, runs the scan and
reports a summary on stderr. Result rows go to the output file (stdout
with ``-o -``).

Exit status: 0 scan completed, 1 configuration error (nothing sent),
2 runtime failure (partial results flushed).

Usage:
    hexmap -6 2001:db8::/32-64 -M icmp_echo --dry-run -o -
    hexmap -4 192.168.0.1/16-20 -p 80,443 -M tcp_syn -O csv -o out.csv
"""

import argparse
import json
import logging
import secrets
import sys
import textwrap
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from rich.console import Console
from rich.table import Table

from .address_space import (
    Family, IdentifierSpec, PortSet, parse_identifier_value, parse_ports, parse_target, space_size,
)
from .config import (
    DEFAULT_BATCH, DEFAULT_COOLDOWN_SECS, DEFAULT_RATE_PPS, DEFAULT_SENDER_THREADS, DEFAULT_TTL,
    ENV_BLOCKLIST, ENV_LOG_LEVEL, configure_logging, default_blocklist_path,
)
from .engine import ScanConfig, ScanStats, effective_probes, run_scan
from .errors import ConfigError, HexmapError, OutputError, ScanAborted, TransportError
from .filters import PrefixFilter, build_filter, count_excluded
from .interfaces import default_interface, resolve_template
from .output import DEFAULT_FIELDS, FORMATS, FRAME_FIELDS, close_sink, list_fields, open_sink
from .permutation import Shard
from .probe_modules import PROBE_MODULES, get_probe_module, parse_probe_args
from .rate_control import RateMode, RatePolicy, effective_pps, parse_bandwidth
from .transport import DryRunTransport, RawSocketTransport

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

DESCRIPTION = (
    "Randomized, stateless IPv4/IPv6 scanner. Targets are ADDR/PLEN-RLO: bits "
    "[0, PLEN) stay fixed, bits [PLEN, RLO) are scanned in pseudorandom order and "
    "bits [RLO, width) hold the identifier."
)


class HexmapArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> HexmapArgumentParser:
    parser = HexmapArgumentParser(prog='hexmap', description=DESCRIPTION)
    parser.add_argument('targets', nargs='*', metavar='TARGET',
                        help='target expression ADDR[/PLEN[-RLO]]; several are scanned in turn')

    family = parser.add_mutually_exclusive_group()
    family.add_argument('-4', dest='family', action='store_const', const='v4', help='scan IPv4')
    family.add_argument('-6', dest='family', action='store_const', const='v6', help='scan IPv6')

    scan = parser.add_argument_group('scan options')
    scan.add_argument('-p', '--target-ports', metavar='PORTS',
                      help='ports, e.g. 80,443,8000-8010 (scanned jointly with addresses)')
    scan.add_argument('-M', '--probe-module', default='icmp_echo', choices=sorted(PROBE_MODULES),
                      help='probe module (default: icmp_echo)')
    scan.add_argument('--probe-args', metavar='K=V,...', help='probe module options')
    scan.add_argument('--list-probe-modules', action='store_true', help='list probe modules and exit')
    scan.add_argument('-I', '--identifier', metavar='ID',
                      help='fixed identifier, e.g. ::1 or 0x1 (default: identifier bits of ADDR)')
    scan.add_argument('--identifier-pattern', metavar='ID,ID,...',
                      help='probe every listed identifier in each randomized prefix')
    scan.add_argument('--identifier-random', metavar='SEED',
                      help='one pseudorandom identifier per randomized prefix')
    scan.add_argument('-e', '--seed', type=lambda s: int(s, 0), metavar='N',
                      help='permutation and validation seed (default: random, echoed)')
    scan.add_argument('--shards', type=int, default=1, metavar='N', help='total number of shards')
    scan.add_argument('--shard', type=int, default=0, metavar='I', help='this shard, 0-based')
    scan.add_argument('-T', '--sender-threads', type=int, default=DEFAULT_SENDER_THREADS, metavar='N')
    scan.add_argument('-c', '--cooldown-time', type=float, default=DEFAULT_COOLDOWN_SECS, metavar='SECS',
                      help=f'keep receiving this long after the last probe (default: {DEFAULT_COOLDOWN_SECS})')
    scan.add_argument('-N', '--max-results', type=int, metavar='N', help='stop after N results')
    scan.add_argument('-t', '--max-runtime', type=float, metavar='SECS', help='stop sending after SECS')
    scan.add_argument('--dry-run', action='store_true', help='build probes and write frames instead of sending')

    rate = parser.add_argument_group('rate options')
    rate.add_argument('-r', '--rate', type=int, metavar='PPS',
                      help=f'packets per second, 0 for unlimited (default: {DEFAULT_RATE_PPS})')
    rate.add_argument('-B', '--bandwidth', metavar='BPS', help='bits per second with K/M/G suffix; wins over --rate')
    rate.add_argument('--batch', type=int, default=DEFAULT_BATCH, metavar='N', help='probes per token request')

    net = parser.add_argument_group('network options')
    net.add_argument('-i', '--interface', metavar='IFACE')
    net.add_argument('-S', '--source-ip', metavar='ADDR')
    net.add_argument('--source-mac', metavar='MAC')
    net.add_argument('-G', '--gateway-mac', metavar='MAC')
    net.add_argument('--ttl', type=int, default=DEFAULT_TTL, help='TTL / hop limit')

    filters = parser.add_argument_group('filter options')
    filters.add_argument('-b', '--blocklist-file', action='append', default=[], metavar='PATH',
                         help=f'CIDR blocklist (default: ${ENV_BLOCKLIST})')
    filters.add_argument('-w', '--allowlist-file', action='append', default=[], metavar='PATH',
                         help='CIDR allowlist; everything else is blocked')

    output = parser.add_argument_group('output options')
    output.add_argument('-o', '--output-file', default='-', metavar='PATH', help="result file, '-' for stdout")
    output.add_argument('-O', '--output-module', default='txt', choices=FORMATS)
    output.add_argument('-f', '--output-fields', metavar='F,F,...', help='fields to write')
    output.add_argument('--list-output-fields', action='store_true', help='list output fields and exit')
    output.add_argument('--output-all', action='store_true', help='also write rejected replies')
    output.add_argument('--dedup', action='store_true', help='report repeated replies once')
    output.add_argument('--summary-json', metavar='PATH', help='also write the final stats as JSON')

    misc = parser.add_argument_group('general')
    misc.add_argument('-v', '--verbose', action='count', default=0, help='-v info, -vv debug')
    misc.add_argument('-q', '--quiet', action='store_true', help='errors only')
    misc.add_argument('--manpage', action='store_true', help='print the manual page and exit')
    return parser


def _infer_family(args) -> Family:
    if args.family:
        return Family.coerce(args.family)
    return Family.V6 if ':' in args.targets[0] else Family.V4


def _identifier(args, family: Family) -> Optional[IdentifierSpec]:
    chosen = [x for x in (args.identifier, args.identifier_pattern, args.identifier_random) if x]
    if len(chosen) > 1:
        raise ConfigError("Use only one of -I, --identifier-pattern and --identifier-random")
    if args.identifier:
        return IdentifierSpec.fixed(parse_identifier_value(args.identifier, family))
    if args.identifier_pattern:
        values = [parse_identifier_value(v, family) for v in args.identifier_pattern.split(',') if v.strip()]
        return IdentifierSpec.from_pattern(values)
    if args.identifier_random:
        try:
            return IdentifierSpec.random(int(args.identifier_random, 0))
        except ValueError:
            raise ConfigError(f"Identifier seed must be an integer, got {args.identifier_random!r}") from None
    return None


def _rate_policy(args) -> RatePolicy:
    if args.bandwidth:
        return RatePolicy.bps(parse_bandwidth(args.bandwidth), args.batch)
    if args.rate == 0:
        return RatePolicy.unlimited(args.batch)
    if args.rate is not None and args.rate < 0:
        raise ConfigError(f"Rate must be >= 0, got {args.rate}")
    return RatePolicy.pps(args.rate or DEFAULT_RATE_PPS, args.batch)


def build_config(args, simulated: bool = False) -> Tuple[ScanConfig, Optional[PrefixFilter], Optional[str]]:
    """
    Map parsed flags onto a validated ScanConfig.

    Args:
        args: argparse namespace from build_parser()
        simulated: a transport was injected; skip interface discovery

    Returns:
        (config, prefix filter or None, interface name or None)

    Raises:
        ConfigError: any invalid or inconsistent flag
    """
    if not args.targets:
        raise ConfigError("At least one target is required")
    family = _infer_family(args)
    probe = get_probe_module(args.probe_module, parse_probe_args(args.probe_args))

    if args.target_ports:
        ports = parse_ports(args.target_ports)
    elif probe.default_ports:
        ports = PortSet(probe.default_ports)
    else:
        ports = PortSet.icmp()
    identifier = _identifier(args, family)
    targets = tuple(parse_target(t, family, identifier, ports) for t in args.targets)

    discover = not (args.dry_run or simulated)
    template = resolve_template(family, targets[0].base, args.interface, args.source_ip,
                                args.source_mac, args.gateway_mac, args.ttl, discover)
    iface = args.interface or (default_interface(family) if discover else None)

    blocklists = list(args.blocklist_file)
    if not blocklists and default_blocklist_path() is not None:
        blocklists.append(default_blocklist_path())
    prefix_filter = None
    if blocklists or args.allowlist_file:
        prefix_filter = build_filter(family, blocklists, args.allowlist_file)

    config = ScanConfig(
        targets=targets,
        probe=probe,
        template=template,
        rate=_rate_policy(args),
        seed=args.seed if args.seed is not None else secrets.randbits(48),
        shard=Shard(args.shard, args.shards),
        sender_threads=args.sender_threads,
        cooldown_secs=args.cooldown_time,
        dry_run=args.dry_run,
        max_results=args.max_results,
        max_runtime=args.max_runtime,
        output_all=args.output_all,
        dedup=args.dedup,
    ).validate()
    effective_pps(config.rate, probe.probe_bytes_on_wire(template))
    return config, prefix_filter, iface


def _format_duration(seconds: float) -> str:
    return f"{seconds:,.0f} s"


def echo_config(config: ScanConfig, prefix_filter: Optional[PrefixFilter] = None,
                console: Optional[Console] = None) -> List[Tuple[str, str]]:
    """
    Print the pre-scan summary table and return its rows.

    Includes space size, excluded count, estimated duration and the seed.
    """
    probe_bytes = config.probe.probe_bytes_on_wire(config.template)
    total = sum(space_size(spec) for spec in config.targets)
    excluded = sum(count_excluded(spec, prefix_filter) * len(spec.ports) for spec in config.targets)
    effective = effective_probes(config.targets, prefix_filter, config.shard)
    pps = effective_pps(config.rate, probe_bytes)
    rows = []
    if config.dry_run:
        rows.append(('Mode', 'DRY RUN (nothing is sent)'))
    rows += [
        ('Targets', ', '.join(spec.describe() for spec in config.targets)),
        ('Family', config.family.value),
        ('Probe module', config.probe.describe()),
        ('Ports', ','.join(str(p) for p in config.spec.ports) if config.probe.uses_ports else '-'),
        ('Space size', f"{total:,}"),
        ('Excluded', f"{excluded:,}"),
        ('Probes to send', f"{effective:,}"),
        ('Rate', config.rate.describe() + (f" ({pps:,} pps)" if config.rate.mode is RateMode.BPS else '')),
        ('Estimated duration', _format_duration(effective / pps) if pps else 'unbounded'),
        ('Seed', str(config.seed)),
        ('Shard', f"{config.shard.shard_index} of {config.shard.shard_count}"),
        ('Sender threads', str(config.sender_threads)),
        ('Cooldown', f"{config.cooldown_secs:g} s"),
    ]
    console = console or Console(stderr=True)
    if config.dry_run:
        console.print('[bold yellow]DRY RUN[/bold yellow] frames are written to the output instead of sent')
    table = Table(title='hexmap', show_header=False)
    table.add_column('setting', style='bold')
    table.add_column('value')
    for label, value in rows:
        table.add_row(label, value)
    console.print(table)
    return rows


def print_summary(stats: ScanStats, console: Optional[Console] = None):
    console = console or Console(stderr=True)
    summary = stats.as_dict()
    table = Table(title='scan summary', show_header=False)
    table.add_column('counter', style='bold')
    table.add_column('value', justify='right')
    for key in ('sent', 'recv', 'hits', 'blocked_skips', 'rejected', 'duplicates', 'send_errors'):
        table.add_row(key, f"{summary[key]:,}")
    table.add_row('duration', f"{summary['duration_secs']:.2f} s")
    rate = summary['send_rate_pps']
    table.add_row('send rate', f"{rate:,.0f} pps" if rate is not None else '-')
    console.print(table)


def render_manpage(parser: Optional[argparse.ArgumentParser] = None) -> str:
    """Manual page text generated from the flag table."""
    parser = parser or build_parser()
    wrap = textwrap.TextWrapper(width=78, initial_indent='        ', subsequent_indent='        ')
    lines = ['NAME', '    hexmap - randomized stateless IPv4/IPv6 network scanner', '',
             'SYNOPSIS', '    ' + parser.format_usage().strip().replace('usage: ', ''), '',
             'DESCRIPTION']
    lines += textwrap.wrap(DESCRIPTION, width=78, initial_indent='    ', subsequent_indent='    ')
    lines += ['', 'OPTIONS']
    for action in parser._actions:
        if not action.option_strings or action.help == argparse.SUPPRESS:
            continue
        flags = ', '.join(action.option_strings)
        if action.nargs != 0:
            flags += ' ' + (action.metavar or action.dest.upper())
        lines.append('    ' + flags)
        if action.help:
            lines += wrap.wrap(action.help.replace('%(default)s', str(action.default)))
    lines += ['', 'PROBE MODULES']
    for name, cls in PROBE_MODULES.items():
        lines.append(f"    {name}")
        lines += wrap.wrap(cls.description)
    lines += ['', 'ENVIRONMENT',
              f"    {ENV_BLOCKLIST}", '        default blocklist file when -b is not given',
              f"    {ENV_LOG_LEVEL}", '        log level override (DEBUG, INFO, WARNING, ERROR)',
              '', 'EXIT STATUS',
              '    0  scan completed', '    1  configuration error, nothing sent',
              '    2  runtime failure, partial results flushed']
    return '\n'.join(lines) + '\n'


def _list_probe_modules() -> str:
    return '\n'.join(f"{name:<12} {cls.description}" for name, cls in PROBE_MODULES.items())


def _output_fields(args) -> Optional[Sequence[str]]:
    if args.output_fields:
        return args.output_fields.split(',')
    if args.dry_run:
        return FRAME_FIELDS if args.output_module != 'txt' else ('frame',)
    return DEFAULT_FIELDS[args.output_module]


def main(argv: Optional[Sequence[str]] = None, transport=None, clock=None) -> int:
    """
    Run hexmap with the given arguments.

    Args:
        argv: arguments without the program name (sys.argv[1:] when None)
        transport: injected transport (tests); raw socket or dry-run otherwise
        clock: clock shared with an injected transport

    Returns:
        Exit status 0, 1 or 2.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(-1 if args.quiet else args.verbose)

    if args.manpage:
        sys.stdout.write(render_manpage(parser))
        return EXIT_OK
    if args.list_probe_modules:
        print(_list_probe_modules())
        return EXIT_OK
    if args.list_output_fields:
        print(list_fields())
        return EXIT_OK
    if not args.targets:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: at least one target is required", file=sys.stderr)
        return EXIT_CONFIG

    console = Console(stderr=True, quiet=args.quiet)
    try:
        config, prefix_filter, iface = build_config(args, simulated=transport is not None)
        sink = open_sink(args.output_module, _output_fields(args), args.output_file)
    except HexmapError as e:
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    echo_config(config, prefix_filter, console)

    owned = transport is None
    try:
        if transport is None:
            transport = DryRunTransport() if config.dry_run else RawSocketTransport(iface, config.family)
    except TransportError as e:
        close_sink(sink)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    code = EXIT_OK
    stats = None
    try:
        stats = run_scan(config, transport, sink, prefix_filter, clock)
    except ScanAborted as e:
        stats = e.stats
        code = EXIT_RUNTIME
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
    except ConfigError as e:
        code = EXIT_CONFIG
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
    except HexmapError as e:
        code = EXIT_RUNTIME
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
    finally:
        try:
            close_sink(sink)
        except OutputError as e:
            code = EXIT_RUNTIME
            print(f"{parser.prog}: error: {e}", file=sys.stderr)
        if owned:
            transport.close()

    if stats is not None:
        print_summary(stats, console)
        if args.summary_json:
            try:
                Path(args.summary_json).write_text(json.dumps(stats.as_dict(), indent=2) + '\n')
            except OSError as e:
                logger.error(f"Cannot write summary to {args.summary_json}: {e}")
                code = code or EXIT_RUNTIME
    return code
