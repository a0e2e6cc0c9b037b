"""
Result Output
=============
Writes accepted replies (and, with --output-all, rejected ones) as TXT,
CSV or JSONL, with a user-selected subset of fields.

- txt: one line per record, fields separated by spaces; saddr by default
- csv: header row, then rows buffered and written in batches through pandas
- jsonl: one JSON object per line

Binary values (payload, frame) are hex in txt/csv and base64 in jsonl.

Usage:
    sink = open_sink('csv', ['saddr', 'outcome'], 'results.csv')
    write_record(sink, record)
    rows = close_sink(sink)
"""

import base64
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Union

import pandas as pd
import pytz

from .address_space import Family, format_address
from .config import CSV_FLUSH_ROWS
from .errors import OutputError
from .packets.headers import strip_ethernet
from .packets.parse import ReplyKind, parse_reply
from .packets.probes import DNS_CLASS_CH

logger = logging.getLogger(__name__)

FORMATS = ('txt', 'csv', 'jsonl')

FIELD_REGISTRY: Dict[str, str] = {
    'saddr': 'address the reply came from (router for ICMP errors)',
    'daddr': 'probed destination address',
    'sport': 'probed destination port (0 for ICMP)',
    'dport': 'local port the reply was sent to',
    'outcome': 'reply classification, e.g. synack, echo_reply, unreach_port',
    'probe_type': 'probe module name',
    'rtt_ms': 'round trip time in ms, when derivable from the reply',
    'payload': 'reply payload or decoded answer',
    'timestamp': 'UTC receive time (ISO 8601)',
    'ttl': 'TTL / hop limit of the reply',
    'family': 'v4 or v6',
    'frame': 'complete frame (dry-run only)',
}

BINARY_FIELDS = frozenset({'payload', 'frame'})

DEFAULT_FIELDS = {
    'txt': ('saddr',),
    'csv': ('saddr', 'daddr', 'sport', 'dport', 'outcome', 'probe_type', 'timestamp'),
    'jsonl': ('saddr', 'daddr', 'sport', 'dport', 'outcome', 'probe_type', 'rtt_ms',
              'payload', 'timestamp', 'ttl', 'family'),
}

FRAME_FIELDS = ('daddr', 'dport', 'probe_type', 'frame')

_PROTO_NAMES = {
    ReplyKind.ICMP_ECHO_REQUEST: 'icmp_echo',
    ReplyKind.TCP: 'tcp_syn',
    ReplyKind.UDP: 'udp',
    ReplyKind.DNS: 'dns',
}


@dataclass
class ReplyRecord:
    saddr: int
    daddr: int
    family: Family
    sport: int = 0
    dport: int = 0
    outcome: str = ''
    probe_type: str = ''
    rtt_ms: Optional[float] = None
    payload: bytes = b''
    ttl: Optional[int] = None
    timestamp: datetime = field(default_factory=lambda: datetime.now(pytz.utc))
    frame: bytes = b''

    def value(self, name: str):
        if name in ('saddr', 'daddr'):
            return format_address(self.family, getattr(self, name))
        if name == 'family':
            return self.family.value
        if name == 'timestamp':
            return self.timestamp.isoformat()
        return getattr(self, name)


def list_fields() -> str:
    width = max(len(name) for name in FIELD_REGISTRY)
    return '\n'.join(f"{name:<{width}}  {doc}" for name, doc in FIELD_REGISTRY.items())


def check_fields(fields: Sequence[str]) -> List[str]:
    fields = [f.strip() for f in fields if f.strip()]
    unknown = [f for f in fields if f not in FIELD_REGISTRY]
    if unknown:
        raise OutputError(
            f"Unknown output field(s) {', '.join(unknown)}; valid fields: {', '.join(FIELD_REGISTRY)}"
        )
    if not fields:
        raise OutputError("No output fields selected")
    return fields


class ResultSink:
    """Single-writer result file; only the receiver thread writes."""

    def __init__(self, fmt: str, fields: Sequence[str], handle: TextIO, path: str, owns_handle: bool):
        self.fmt = fmt
        self.fields = list(fields)
        self.handle = handle
        self.path = path
        self.owns_handle = owns_handle
        self.rows = 0
        self._pending: List[list] = []
        self.closed = False

    def _encode(self, name: str, value):
        if value is None:
            return None if self.fmt == 'jsonl' else ''
        if name in BINARY_FIELDS:
            if self.fmt == 'jsonl':
                return base64.b64encode(value).decode('ascii')
            return value.hex()
        return value

    def _io(self, action):
        try:
            action()
        except OSError as e:
            raise OutputError(f"Writing results to {self.path} failed: {e}") from e

    def write_header(self):
        if self.fmt == 'csv':
            self._io(lambda: pd.DataFrame(columns=self.fields).to_csv(self.handle, index=False))

    def write(self, values: Dict[str, object]):
        if self.closed:
            raise OutputError(f"Sink {self.path} is closed")
        row = [self._encode(name, values.get(name)) for name in self.fields]
        if self.fmt == 'csv':
            self._pending.append(row)
            if len(self._pending) >= CSV_FLUSH_ROWS:
                self.flush()
        elif self.fmt == 'jsonl':
            line = json.dumps(dict(zip(self.fields, row)), separators=(',', ':'))
            self._io(lambda: self.handle.write(line + '\n'))
        else:
            line = ' '.join(str(v) for v in row)
            self._io(lambda: self.handle.write(line + '\n'))
        self.rows += 1

    def flush(self):
        if self._pending:
            frame = pd.DataFrame(self._pending, columns=self.fields)
            self._pending = []
            self._io(lambda: frame.to_csv(self.handle, header=False, index=False))
        self._io(self.handle.flush)

    def close(self) -> int:
        if self.closed:
            return self.rows
        self.flush()
        self.closed = True
        if self.owns_handle:
            self._io(self.handle.close)
        logger.info(f"Wrote {self.rows} rows to {self.path}")
        return self.rows


def open_sink(fmt: str, fields: Optional[Sequence[str]] = None,
              path: Union[str, Path, TextIO, None] = '-') -> ResultSink:
    """
    Open a result sink.

    Args:
        fmt: txt, csv or jsonl
        fields: field names; the format's defaults when None
        path: file path, ``-`` for stdout, or an open text handle

    Raises:
        OutputError: unknown format or field, or the path cannot be opened
    """
    if fmt not in FORMATS:
        raise OutputError(f"Unknown output format {fmt!r}; choose from {', '.join(FORMATS)}")
    fields = check_fields(fields if fields is not None else DEFAULT_FIELDS[fmt])
    if path is None or path == '-':
        sink = ResultSink(fmt, fields, sys.stdout, '<stdout>', owns_handle=False)
    elif hasattr(path, 'write'):
        sink = ResultSink(fmt, fields, path, getattr(path, 'name', '<stream>'), owns_handle=False)
    else:
        try:
            handle = open(path, 'w', newline='', encoding='utf-8')
        except OSError as e:
            raise OutputError(f"Cannot open {path} for writing: {e}") from e
        sink = ResultSink(fmt, fields, handle, str(path), owns_handle=True)
    sink.write_header()
    return sink


def write_record(sink: ResultSink, record: ReplyRecord):
    sink.write({name: record.value(name) for name in sink.fields})


def write_frame(sink: ResultSink, frame: bytes):
    """Write one dry-run frame with the destination it was built for."""
    stripped = strip_ethernet(frame)
    view = parse_reply(stripped[1]) if stripped else None
    if view is None or view.family is None:
        sink.write({'frame': bytes(frame)})
        return
    dport = view.dport if view.dport >= 0 else 0
    probe_type = _PROTO_NAMES.get(view.kind, 'other')
    if view.dns is not None and view.dns.qclass == DNS_CLASS_CH:
        probe_type = 'dns_version'
    record = ReplyRecord(saddr=view.src, daddr=view.dst, family=view.family, dport=dport,
                         probe_type=probe_type, ttl=view.ttl, frame=bytes(frame))
    values = {name: record.value(name) for name in sink.fields}
    sink.write(values)


def close_sink(sink: ResultSink) -> int:
    """Flush and close; returns the number of rows written (csv header excluded)."""
    return sink.close()
