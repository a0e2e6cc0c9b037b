"""
Scan Engine
===========
Decoupled sending and receiving over a pluggable transport.

Sender threads each walk their own shard of the target's permutation
cycle: index -> (address, port) -> filter -> rate limit -> build -> send.
One receiver thread parses and validates replies concurrently and writes
records to the sink, then keeps listening for the cooldown after the last
send. Targets are scanned one after another with a single receiver.

Usage:
    config = ScanConfig(targets=(spec,), probe=get_probe_module('icmp_echo'),
                        template=template, seed=1)
    stats = run_scan(config, transport, sink, prefix_filter)
"""

import logging
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pytz

from .address_space import Family, TargetSpec, probe_tuple, space_size
from .clock import MonotonicClock
from .config import (
    DEFAULT_COOLDOWN_SECS, DEFAULT_RATE_PPS, PROGRESS_INTERVAL_SECS, RECEIVE_POLL_SECS,
)
from .errors import ConfigError, HexmapError, ScanAborted
from .filters import PrefixFilter, count_excluded
from .output import ReplyRecord, ResultSink, write_frame, write_record
from .packets.headers import FrameTemplate, build_ethernet
from .packets.parse import parse_reply
from .permutation import CycleState, Shard, cycle_next, make_cycle_params, shard_init, shard_quota
from .probe_modules import ProbeModule
from .rate_control import RatePolicy, TokenBucket
from .transport import Transport
from .validation import Accept, Reject, RejectReason, ScanSecret, probe_fields, verify

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScanConfig:
    targets: Tuple[TargetSpec, ...]
    probe: ProbeModule
    template: FrameTemplate
    rate: RatePolicy = field(default_factory=lambda: RatePolicy.pps(DEFAULT_RATE_PPS))
    seed: int = 0
    shard: Shard = field(default_factory=Shard)
    sender_threads: int = 1
    cooldown_secs: float = DEFAULT_COOLDOWN_SECS
    dry_run: bool = False
    max_results: Optional[int] = None
    max_runtime: Optional[float] = None
    output_all: bool = False
    dedup: bool = False

    @property
    def spec(self) -> TargetSpec:
        return self.targets[0]

    @property
    def family(self) -> Family:
        return self.template.family

    def validate(self) -> 'ScanConfig':
        if not self.targets:
            raise ConfigError("At least one target is required")
        if self.sender_threads < 1:
            raise ConfigError(f"sender_threads must be >= 1, got {self.sender_threads}")
        if self.cooldown_secs < 0:
            raise ConfigError(f"cooldown must be >= 0, got {self.cooldown_secs}")
        if self.max_results is not None and self.max_results < 1:
            raise ConfigError(f"max_results must be >= 1, got {self.max_results}")
        if self.max_runtime is not None and self.max_runtime <= 0:
            raise ConfigError(f"max_runtime must be > 0, got {self.max_runtime}")
        for spec in self.targets:
            if spec.family is not self.family:
                raise ConfigError(f"Target {spec.describe()} is {spec.family.value}, scan is {self.family.value}")
            if self.probe.uses_ports and spec.ports.is_sentinel:
                raise ConfigError(f"Probe module {self.probe.name} needs target ports (-p)")
            if not self.probe.uses_ports and not spec.ports.is_sentinel:
                raise ConfigError(f"Probe module {self.probe.name} does not use ports")
        return self


@dataclass
class ScanStats:
    sent: int = 0
    recv: int = 0
    hits: int = 0
    blocked_skips: int = 0
    send_errors: int = 0
    rejected: int = 0
    duplicates: int = 0
    written: int = 0
    start: float = 0.0
    end: Optional[float] = None
    last_send_at: Optional[float] = None
    first_hit_at: Optional[float] = None
    started_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, **counts):
        with self._lock:
            for name, value in counts.items():
                setattr(self, name, getattr(self, name) + value)

    def snapshot(self) -> 'ScanStats':
        with self._lock:
            return replace(self, _lock=threading.Lock())

    @property
    def duration(self) -> float:
        return (self.end if self.end is not None else self.start) - self.start

    def as_dict(self) -> Dict[str, object]:
        return {
            'sent': self.sent,
            'recv': self.recv,
            'hits': self.hits,
            'blocked_skips': self.blocked_skips,
            'send_errors': self.send_errors,
            'rejected': self.rejected,
            'duplicates': self.duplicates,
            'duration_secs': round(self.duration, 3),
            'send_rate_pps': round(self.sent / self.duration, 1) if self.duration > 0 else None,
            'started_at': self.started_at.isoformat() if self.started_at else None,
            'finished_at': self.finished_at.isoformat() if self.finished_at else None,
        }


@dataclass(frozen=True)
class Progress:
    percent: float
    eta_secs: Optional[float]
    pps: float
    effective: int


def effective_probes(targets: Union[TargetSpec, Sequence[TargetSpec]],
                     prefix_filter: Optional[PrefixFilter] = None,
                     shard: Shard = Shard()) -> int:
    """Probes this shard will send: space_size minus excluded, scaled to the shard's quota."""
    if isinstance(targets, TargetSpec):
        targets = (targets,)
    total = 0
    for spec in targets:
        n = space_size(spec)
        effective = n - count_excluded(spec, prefix_filter) * len(spec.ports)
        if shard.shard_count > 1:
            effective = effective * shard_quota(n, shard) // n
        total += effective
    return total


def progress_report(stats: ScanStats, targets: Union[TargetSpec, Sequence[TargetSpec]],
                    prefix_filter: Optional[PrefixFilter], clock,
                    shard: Shard = Shard()) -> Progress:
    """
    Percent complete, ETA and live send rate.

    ETA is None until some time has elapsed and something was sent.
    """
    effective = effective_probes(targets, prefix_filter, shard)
    sent = stats.sent
    percent = 100.0 * sent / effective if effective else 100.0
    elapsed = clock.now() - stats.start
    if elapsed <= 0 or sent == 0:
        return Progress(round(percent, 2), None, 0.0, effective)
    pps = sent / elapsed
    eta = max(effective - sent, 0) / pps
    return Progress(round(percent, 2), eta, pps, effective)


class ScanEngine:
    """One scan run; not reusable."""

    def __init__(self, config: ScanConfig, transport: Transport, sink: ResultSink,
                 prefix_filter: Optional[PrefixFilter] = None, clock=None):
        self.config = config.validate()
        self.transport = transport
        self.sink = sink
        self.prefix_filter = prefix_filter
        self.clock = clock or MonotonicClock()
        self.probe = config.probe
        self.secret = ScanSecret.from_seed(config.seed)
        self.stats = ScanStats()
        self.bucket = TokenBucket(config.rate, self.clock,
                                  config.probe.probe_bytes_on_wire(config.template))
        self.stop_sending = threading.Event()
        self.stop_receiving = threading.Event()
        self.senders_done = threading.Event()
        self.failure: Optional[BaseException] = None
        self._seen = set()
        self._last_progress = 0.0

    def _fail(self, error: BaseException):
        if self.failure is None:
            self.failure = error
            logger.error(f"Scan failed: {error}")
        self.stop_sending.set()
        self.stop_receiving.set()

    def _out_of_time(self) -> bool:
        limit = self.config.max_runtime
        return limit is not None and self.clock.now() - self.stats.start >= limit

    # -- sending -------------------------------------------------------

    def _send_batch(self, batch: List[Tuple[int, int]]):
        config = self.config
        position = 0
        while position < len(batch):
            if self.stop_sending.is_set():
                return
            grant = self.bucket.acquire(len(batch) - position)
            if not grant.permitted:
                self.clock.sleep(grant.wait)
                continue
            sent = 0
            send_time = self.clock.now()
            for addr, port in batch[position:position + grant.permitted]:
                fields = probe_fields(self.secret, addr, port, self.probe.probe_type, config.family)
                packet = self.probe.build(config.template, addr, port, fields, send_time)
                try:
                    self.transport.send(build_ethernet(config.template, packet))
                except (HexmapError, OSError) as e:
                    self.stats.add(sent=sent, send_errors=1)
                    self._fail(e)
                    return
                sent += 1
            self.stats.add(sent=sent)
            position += grant.permitted

    def _sender(self, spec: TargetSpec, state: CycleState):
        batch_size = self.config.rate.batch
        batch = []
        try:
            while not self.stop_sending.is_set():
                if self._out_of_time():
                    logger.info("Maximum runtime reached; stopping senders")
                    self.stop_sending.set()
                    break
                index = cycle_next(state)
                if index is None:
                    break
                addr, port = probe_tuple(spec, index)
                if self.prefix_filter is not None and not self.prefix_filter.is_allowed(addr):
                    self.stats.add(blocked_skips=1)
                    continue
                batch.append((addr, port))
                if len(batch) >= batch_size:
                    self._send_batch(batch)
                    batch = []
            if batch and not self.stop_sending.is_set():
                self._send_batch(batch)
        except Exception as e:
            self._fail(e)

    def _send_target(self, spec: TargetSpec):
        config = self.config
        params = make_cycle_params(space_size(spec), config.seed)
        threads = []
        for t in range(config.sender_threads):
            state = shard_init(params, config.shard.split(config.sender_threads, t))
            thread = threading.Thread(target=self._sender, args=(spec, state),
                                      name=f'hexmap-send-{t}', daemon=True)
            threads.append(thread)
            thread.start()
        for thread in threads:
            thread.join()

    def _send_all(self):
        try:
            for spec in self.config.targets:
                if self.stop_sending.is_set():
                    break
                logger.info(f"Scanning {spec.describe()} ({space_size(spec):,} probes)")
                self._send_target(spec)
        except Exception as e:
            self._fail(e)
        finally:
            self.stats.last_send_at = self.clock.now()
            self.senders_done.set()

    # -- receiving -----------------------------------------------------

    def _record_for(self, accept: Accept, view) -> ReplyRecord:
        probe = self.probe
        is_error = view.inner is not None
        return ReplyRecord(
            saddr=accept.responder,
            daddr=accept.probe_dst,
            family=accept.family,
            sport=accept.probe_port,
            dport=accept.local_port,
            outcome=probe.normalize_outcome(accept.outcome),
            probe_type=probe.name,
            rtt_ms=None if is_error else probe.rtt_ms(view, self.clock.now()),
            payload=b'' if is_error else probe.reply_payload(view),
            ttl=view.ttl,
        )

    def _rejected_record(self, view, reason: RejectReason) -> ReplyRecord:
        return ReplyRecord(
            saddr=view.src,
            daddr=view.dst,
            family=view.family or self.config.family,
            sport=max(view.sport, 0),
            dport=max(view.dport, 0),
            outcome=reason.value,
            probe_type=self.probe.name,
            payload=view.payload,
            ttl=view.ttl,
        )

    def _handle(self, packet: bytes):
        config = self.config
        view = parse_reply(packet)
        self.stats.add(recv=1)
        result = verify(view, self.secret, self.probe.qname, self.probe.probe_type)
        if isinstance(result, Accept) and result.probe_type is not self.probe.probe_type:
            result = Reject(RejectReason.BAD_TOKEN)
        if isinstance(result, Accept) and config.dedup:
            key = (result.responder, result.probe_dst, result.probe_port, result.outcome)
            if key in self._seen:
                self.stats.add(duplicates=1)
                result = Reject(RejectReason.LATE_DUPLICATE)
            else:
                self._seen.add(key)
        if isinstance(result, Reject):
            self.stats.add(rejected=1)
            if logger.isEnabledFor(logging.DEBUG) and view.family is not None:
                logger.debug(f"Rejected reply from {view.src_text}: {result.reason.value}")
            if config.output_all and view.family is not None:
                write_record(self.sink, self._rejected_record(view, result.reason))
                self.stats.add(written=1)
            return
        if self.stats.first_hit_at is None:
            self.stats.first_hit_at = self.clock.now()
        write_record(self.sink, self._record_for(result, view))
        self.stats.add(hits=1, written=1)
        if config.max_results is not None and self.stats.hits >= config.max_results:
            logger.info(f"Reached {config.max_results} results; stopping")
            self.stop_sending.set()
            self.stop_receiving.set()

    def _write_captured(self):
        for frame in self.transport.take_captured():
            write_frame(self.sink, frame)
            self.stats.add(written=1)

    def _log_progress(self):
        now = self.clock.now()
        if now - self._last_progress < PROGRESS_INTERVAL_SECS:
            return
        self._last_progress = now
        stats = self.stats.snapshot()
        progress = progress_report(stats, self.config.targets, self.prefix_filter,
                                   self.clock, self.config.shard)
        eta = f"{progress.eta_secs:.0f}s" if progress.eta_secs is not None else 'unknown'
        logger.info(f"{progress.percent:.1f}% sent={stats.sent:,} hits={stats.hits:,} "
                    f"rate={progress.pps:,.0f}pps eta={eta}")

    def _receiver(self):
        cooldown = 0.0 if self.config.dry_run else self.config.cooldown_secs
        simulated = getattr(self.clock, 'simulated', False)
        try:
            while not self.stop_receiving.is_set():
                done = self.senders_done.is_set()
                timeout = 0.0 if (done and simulated) else RECEIVE_POLL_SECS
                packet = self.transport.receive(timeout)
                self._write_captured()
                if packet is not None:
                    self._handle(packet)
                    continue
                self._log_progress()
                if done:
                    if self.clock.now() >= self.stats.last_send_at + cooldown:
                        break
                    if simulated:
                        self.clock.advance(RECEIVE_POLL_SECS)
            self._write_captured()
        except Exception as e:
            self._fail(e)

    # -- driver --------------------------------------------------------

    def run(self) -> ScanStats:
        config = self.config
        self.stats.start = self.clock.now()
        self.stats.started_at = datetime.now(pytz.utc)
        self._last_progress = self.stats.start
        logger.info(f"Starting scan: {len(config.targets)} target(s), probe {self.probe.describe()}, "
                    f"rate {config.rate.describe()}, seed {config.seed}, "
                    f"shard {config.shard.shard_index}/{config.shard.shard_count}")
        receiver = threading.Thread(target=self._receiver, name='hexmap-recv', daemon=True)
        receiver.start()
        try:
            self._send_all()
        finally:
            receiver.join()
            self.stats.end = self.clock.now()
            self.stats.finished_at = datetime.now(pytz.utc)
        logger.info(f"Scan finished: sent={self.stats.sent:,} recv={self.stats.recv:,} "
                    f"hits={self.stats.hits:,} in {self.stats.duration:.2f}s")
        if self.failure is not None:
            raise ScanAborted(str(self.failure), self.stats) from self.failure
        return self.stats


def run_scan(config: ScanConfig, transport: Transport, sink: ResultSink,
             prefix_filter: Optional[PrefixFilter] = None, clock=None) -> ScanStats:
    """
    Run a complete scan.

    Args:
        config: validated scan configuration
        transport: open transport; frames go out through send()
        sink: result sink, written only by the receiver thread
        prefix_filter: allow/block filter for the scan family
        clock: MonotonicClock by default; pass the simulator's clock in tests

    Returns:
        Final ScanStats.

    Raises:
        ScanAborted: on transport or output failure, carrying partial stats
    """
    return ScanEngine(config, transport, sink, prefix_filter, clock).run()
