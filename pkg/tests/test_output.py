"""
Tests for result sinks and field selection.
"""

import base64
import io
import json
from datetime import datetime

import pandas as pd
import pytest
import pytz

from hexmap.address_space import Family, parse_address
from hexmap.config import CSV_FLUSH_ROWS
from hexmap.errors import OutputError
from hexmap.output import (
    DEFAULT_FIELDS, FIELD_REGISTRY, FRAME_FIELDS, ReplyRecord, close_sink, list_fields,
    open_sink, write_frame, write_record,
)
from hexmap.packets import build_ethernet, build_tcp_syn, build_version_bind_query, build_udp

STAMP = datetime(2024, 5, 1, 12, 0, 0, tzinfo=pytz.utc)


def record(i=0, **overrides):
    values = dict(
        saddr=parse_address('2001:db8::1', Family.V6) + i,
        daddr=parse_address('2001:db8::1', Family.V6) + i,
        family=Family.V6,
        sport=0,
        dport=0,
        outcome='echo_reply',
        probe_type='icmp_echo',
        ttl=57,
        timestamp=STAMP,
    )
    values.update(overrides)
    return ReplyRecord(**values)


class TestFields:
    """Tests for field selection."""

    def test_defaults(self):
        assert DEFAULT_FIELDS['txt'] == ('saddr',)
        for fields in DEFAULT_FIELDS.values():
            assert set(fields) <= set(FIELD_REGISTRY)

    def test_list_fields(self):
        listing = list_fields()
        for name in FIELD_REGISTRY:
            assert name in listing

    def test_unknown_field(self):
        with pytest.raises(OutputError, match='valid fields'):
            open_sink('csv', ['saddr', 'bogus'], io.StringIO())

    def test_empty_fields(self):
        with pytest.raises(OutputError):
            open_sink('csv', [' '], io.StringIO())

    def test_unknown_format(self):
        with pytest.raises(OutputError):
            open_sink('xml', None, io.StringIO())


class TestFormats:
    """Tests for txt, csv and jsonl rendering."""

    def test_txt(self, text_sink):
        sink, buffer = text_sink('txt')
        for i in range(3):
            write_record(sink, record(i))
        assert close_sink(sink) == 3
        assert buffer.getvalue().splitlines() == ['2001:db8::1', '2001:db8::2', '2001:db8::3']

    def test_txt_several_fields(self, text_sink):
        sink, buffer = text_sink('txt', ['saddr', 'outcome', 'ttl'])
        write_record(sink, record())
        close_sink(sink)
        assert buffer.getvalue() == '2001:db8::1 echo_reply 57\n'

    def test_csv(self, text_sink):
        sink, buffer = text_sink('csv', ['saddr', 'sport', 'outcome', 'rtt_ms'])
        write_record(sink, record(sport=443, outcome='synack', rtt_ms=1.5))
        write_record(sink, record(1, sport=80, outcome='rst'))
        assert close_sink(sink) == 2
        frame = pd.read_csv(io.StringIO(buffer.getvalue()))
        assert list(frame.columns) == ['saddr', 'sport', 'outcome', 'rtt_ms']
        assert frame['sport'].tolist() == [443, 80]
        assert frame['outcome'].tolist() == ['synack', 'rst']
        assert frame['rtt_ms'].isna().tolist() == [False, True]

    def test_csv_header_only(self, text_sink):
        sink, buffer = text_sink('csv', ['saddr', 'daddr'])
        assert close_sink(sink) == 0
        assert buffer.getvalue().strip() == 'saddr,daddr'

    def test_csv_batches(self, text_sink):
        sink, buffer = text_sink('csv', ['saddr'])
        total = CSV_FLUSH_ROWS + 10
        for i in range(total):
            write_record(sink, record(i))
        assert len(buffer.getvalue().splitlines()) == CSV_FLUSH_ROWS + 1
        close_sink(sink)
        assert len(pd.read_csv(io.StringIO(buffer.getvalue()))) == total

    def test_jsonl(self, text_sink):
        sink, buffer = text_sink('jsonl')
        write_record(sink, record(payload=b'\x01\x02'))
        close_sink(sink)
        row = json.loads(buffer.getvalue())
        assert row['saddr'] == '2001:db8::1'
        assert row['family'] == 'v6'
        assert row['rtt_ms'] is None
        assert base64.b64decode(row['payload']) == b'\x01\x02'
        assert row['timestamp'] == '2024-05-01T12:00:00+00:00'

    def test_timestamp_defaults_to_utc(self):
        rec = ReplyRecord(saddr=1, daddr=1, family=Family.V4)
        assert rec.timestamp.tzinfo is not None
        assert rec.value('timestamp').endswith('+00:00')


class TestSinkLifecycle:
    """Tests for file handling."""

    def test_file_path(self, tmp_path):
        path = tmp_path / 'out.txt'
        sink = open_sink('txt', None, path)
        write_record(sink, record())
        assert close_sink(sink) == 1
        assert sink.handle.closed
        assert path.read_text() == '2001:db8::1\n'

    def test_close_is_idempotent(self, text_sink):
        sink, _ = text_sink('txt')
        write_record(sink, record())
        assert close_sink(sink) == close_sink(sink) == 1

    def test_write_after_close(self, text_sink):
        sink, _ = text_sink('txt')
        close_sink(sink)
        with pytest.raises(OutputError):
            write_record(sink, record())

    def test_unopenable_path(self, tmp_path):
        with pytest.raises(OutputError, match='Cannot open'):
            open_sink('csv', None, tmp_path / 'missing' / 'out.csv')

    def test_stream_errors_become_output_errors(self):
        class Broken(io.StringIO):
            def write(self, text):
                raise OSError('disk full')

        sink = open_sink('txt', None, Broken())
        with pytest.raises(OutputError, match='disk full'):
            write_record(sink, record())


class TestFrames:
    """Tests for dry-run frame output."""

    def test_tcp_frame(self, text_sink, template_v4):
        dst = parse_address('198.51.100.3', Family.V4)
        frame = build_ethernet(template_v4, build_tcp_syn(template_v4, dst, 40000, 8080, 1))
        sink, buffer = text_sink('csv', list(FRAME_FIELDS))
        write_frame(sink, frame)
        close_sink(sink)
        row = pd.read_csv(io.StringIO(buffer.getvalue()), dtype=str).iloc[0]
        assert (row['daddr'], row['dport'], row['probe_type']) == ('198.51.100.3', '8080', 'tcp_syn')
        assert bytes.fromhex(row['frame']) == frame

    def test_version_bind_frame(self, text_sink, template_v6):
        dst = parse_address('2001:db8::53', Family.V6)
        packet = build_udp(template_v6, dst, 40000, 53, build_version_bind_query(9))
        sink, buffer = text_sink('txt', ['daddr', 'probe_type'])
        write_frame(sink, build_ethernet(template_v6, packet))
        close_sink(sink)
        assert buffer.getvalue() == '2001:db8::53 dns_version\n'

    def test_txt_frame_only(self, text_sink, template_v4):
        frame = build_ethernet(template_v4, build_tcp_syn(template_v4, 5, 1, 2, 3))
        sink, buffer = text_sink('txt', ['frame'])
        write_frame(sink, frame)
        close_sink(sink)
        assert buffer.getvalue().strip() == frame.hex()
