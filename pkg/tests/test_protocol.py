import struct
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demosync.errors import (
    BadMagic,
    CorruptLog,
    OversizePayload,
    PayloadLayoutError,
    SessionFormatError,
    TruncatedRecord,
    UnknownStream,
)
from demosync.geometry import Pose6D, UnitQuaternion
from demosync.hub import Hub, parse_endpoint, send_records
from demosync.protocol import (
    HEADER_SIZE,
    MAX_PAYLOAD,
    RawSession,
    RecordDecoder,
    SessionHeader,
    StreamKind,
    WireRecord,
    decode_pose,
    decode_record,
    decode_stream,
    decode_tactile,
    encode_record,
    iter_records,
    load_session,
    marker_payload,
    pose_payload,
    records_to_bytes,
    replay_session,
    tactile_payload,
    write_session,
)

from _fuzz import random_records


def _rec(kind, t, rng=None):
    from _fuzz import random_payload

    return WireRecord(kind, t, random_payload(rng or np.random.default_rng(0), kind))


def test_pose_record_is_73_bytes():
    blob = encode_record(StreamKind.POSE, 1.5, pose_payload(Pose6D()))
    assert len(blob) == 73 and HEADER_SIZE == 17
    rec = decode_record(blob)
    assert decode_pose(rec).t == 1.5


def test_pipe_round_trip_in_order(rng):
    recs = random_records(rng, 1000)
    blob = records_to_bytes(recs)
    dec = RecordDecoder()
    got = []
    pos = 0
    while pos < len(blob):
        step = int(rng.integers(1, 300))
        got += dec.feed(blob[pos : pos + step])
        pos += step
    assert dec.error is None and dec.pending == 0
    assert len(got) == len(recs)
    assert all(a.bit_equal(b) for a, b in zip(got, recs))


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.data())
def test_prefix_property(seed, data):
    rng = np.random.default_rng(seed)
    recs = random_records(rng, 12)
    blob = records_to_bytes(recs)
    cut = data.draw(st.integers(0, len(blob)))
    done, tail = decode_stream(blob[:cut])
    assert all(a.bit_equal(b) for a, b in zip(done, recs))
    consumed = len(records_to_bytes(done))
    assert consumed + len(tail) == cut
    assert len(tail) < HEADER_SIZE + max(len(r.payload) for r in recs)


def test_framing_errors():
    good = encode_record(StreamKind.ENCODER, 0.0, struct.pack("<H", 7))
    with pytest.raises(BadMagic):
        decode_record(b"XXXX" + good[4:])
    with pytest.raises(TruncatedRecord):
        decode_record(good[:-1])
    with pytest.raises(TruncatedRecord):
        decode_record(good[:10])
    with pytest.raises(PayloadLayoutError):
        decode_record(good + b"\0")
    with pytest.raises(UnknownStream):
        decode_record(good[:4] + b"\x09" + good[5:])
    with pytest.raises(UnknownStream):
        encode_record(9, 0.0, b"")
    with pytest.raises(OversizePayload):
        decode_record(struct.pack("<4sBdI", b"EXU1", 3, 0.0, MAX_PAYLOAD + 1))
    with pytest.raises(PayloadLayoutError):
        encode_record(StreamKind.ENCODER, 0.0, struct.pack("<H", 4096))
    with pytest.raises(PayloadLayoutError):
        encode_record(StreamKind.TACTILE, 0.0, struct.pack("<BHH", 2, 1, 1) + b"\0")
    with pytest.raises(PayloadLayoutError):
        encode_record(StreamKind.POSE, 0.0, b"\0" * 55)


def test_decoder_keeps_records_before_error():
    good = encode_record(StreamKind.MARKER, 1.0, marker_payload(1.0, 2.0))
    dec = RecordDecoder()
    out = dec.feed(good + b"JUNKJUNKJUNKJUNKJUNK")
    assert len(out) == 1 and isinstance(dec.error, BadMagic)
    assert dec.feed(good) == []


def test_iter_records_reports_offset():
    good = encode_record(StreamKind.MARKER, 1.0, marker_payload(1.0, 2.0))
    blob = good * 3 + good[:20]
    seen = []
    with pytest.raises(CorruptLog) as ei:
        for off, rec in iter_records(blob):
            seen.append(off)
    assert seen == [0, len(good), 2 * len(good)]
    assert f"offset={3 * len(good)}" in ei.value.context


def test_tactile_payload_round_trip(rng):
    px = rng.integers(0, 256, (4, 6), dtype=np.uint8)
    sid, back = decode_tactile(WireRecord(StreamKind.TACTILE, 0.0, tactile_payload(1, px)))
    assert sid == 1 and np.array_equal(back, px)


def test_header_round_trip():
    h = SessionHeader("abc", 1.25, (StreamKind.POSE, StreamKind.MARKER), (4, 5), {"x": 3})
    assert SessionHeader.loads(h.dumps()) == h
    with pytest.raises(SessionFormatError):
        SessionHeader.loads("format_version = 7\nsession_id = a\n")


def _session(rng):
    logs = {}
    for k in (StreamKind.POSE, StreamKind.MARKER, StreamKind.ENCODER):
        ts = np.cumsum(rng.uniform(0.001, 0.05, 40))
        # force some cross-stream ties
        ts[5] = 0.5 + int(k) * 0
        ts = np.unique(np.sort(ts))
        logs[k] = [_rec(k, float(t), rng) for t in ts]
    return RawSession(SessionHeader("s1"), logs)


def test_replay_equals_sort_oracle(tmp_path, rng):
    s = _session(rng)
    write_session(s, tmp_path)
    merged = [(k, r.t) for k, r in replay_session(tmp_path)]
    oracle = sorted(
        ((r.t, int(k), i) for k, recs in s.logs.items() for i, r in enumerate(recs)),
    )
    assert merged == [(StreamKind(c), t) for t, c, _ in oracle]


def test_truncated_log(tmp_path, rng):
    s = _session(rng)
    write_session(s, tmp_path)
    p = tmp_path / StreamKind.POSE.log_name
    data = p.read_bytes()
    p.write_bytes(data[:-5])
    with pytest.raises(CorruptLog):
        load_session(tmp_path)
    with pytest.raises(CorruptLog):
        list(replay_session(tmp_path))
    lenient = load_session(tmp_path, strict=False)
    assert len(lenient.records(StreamKind.POSE)) == len(s.records(StreamKind.POSE)) - 1
    assert lenient.warnings and "pose.log" in lenient.warnings[0]


def test_missing_listed_log(tmp_path, rng):
    write_session(_session(rng), tmp_path)
    (tmp_path / StreamKind.MARKER.log_name).unlink()
    with pytest.raises(SessionFormatError):
        load_session(tmp_path, strict=False)
    with pytest.raises(SessionFormatError):
        list(replay_session(tmp_path))


# ---------------------------------------------------------------- hub


def _stream(kind, n, t0=0.0, dt=1e-3):
    rng = np.random.default_rng(int(kind))
    return [_rec(kind, t0 + i * dt, rng) for i in range(n)]


def test_hub_two_clients_interleaved(tmp_path):
    a = _stream(StreamKind.POSE, 500)
    b = _stream(StreamKind.ENCODER, 700)
    with Hub("127.0.0.1", 0, tmp_path) as hub:
        th = [threading.Thread(target=send_records, args=(hub.address, recs, 7)) for recs in (a, b)]
        for t in th:
            t.start()
        for t in th:
            t.join()
        session = hub.stop()
    assert len(session.records(StreamKind.POSE)) == 500
    assert len(session.records(StreamKind.ENCODER)) == 700
    for recs, sent in ((session.records(StreamKind.POSE), a), (session.records(StreamKind.ENCODER), b)):
        assert all(x.bit_equal(y) for x, y in zip(recs, sent))
    assert hub.counters["out_of_order_drops"] == 0


def test_hub_drops_out_of_order(tmp_path):
    recs = _stream(StreamKind.MARKER, 10)
    recs.insert(5, recs[2])
    with Hub("127.0.0.1", 0, tmp_path) as hub:
        send_records(hub.address, recs)
        session = hub.stop()
    assert len(session.records(StreamKind.MARKER)) == 10
    assert session.header.counters["out_of_order_drops"] == 1


def test_hub_protocol_error_keeps_prefix(tmp_path):
    import socket

    good = records_to_bytes(_stream(StreamKind.VIDEO_META, 5))
    with Hub("127.0.0.1", 0, tmp_path) as hub:
        with socket.create_connection(hub.address) as s:
            s.sendall(good + b"garbage-bytes-here!!")
        time.sleep(0.3)
        session = hub.stop()
    assert len(session.records(StreamKind.VIDEO_META)) == 5
    assert hub.counters["protocol_errors"] == 1


def test_hub_partial_tail_lost_only(tmp_path):
    import socket

    recs = _stream(StreamKind.POSE, 20)
    blob = records_to_bytes(recs)
    with Hub("127.0.0.1", 0, tmp_path) as hub:
        with socket.create_connection(hub.address) as s:
            s.sendall(blob[:-30])
        session = hub.stop()
    assert len(session.records(StreamKind.POSE)) == 19


def test_hub_throughput(tmp_path):
    n_per, kinds = 4000, (StreamKind.POSE, StreamKind.ENCODER, StreamKind.MARKER)
    streams = [_stream(k, n_per) for k in kinds]
    with Hub("127.0.0.1", 0, tmp_path) as hub:
        t0 = time.perf_counter()
        th = [threading.Thread(target=send_records, args=(hub.address, s)) for s in streams]
        for t in th:
            t.start()
        for t in th:
            t.join()
        # wait for the handlers to finish writing
        deadline = time.time() + 10
        while sum(hub._logs[k].count for k in kinds) < n_per * len(kinds) and time.time() < deadline:
            time.sleep(0.005)
        rate = n_per * len(kinds) / (time.perf_counter() - t0)
        session = hub.stop()
    assert sum(len(session.records(k)) for k in kinds) == n_per * len(kinds)
    assert rate >= 5000, rate


def test_hub_refuses_existing_session(tmp_path):
    (tmp_path / "pose.log").write_bytes(b"")
    with pytest.raises(FileExistsError):
        Hub("127.0.0.1", 0, tmp_path)


def test_parse_endpoint():
    assert parse_endpoint("0.0.0.0:9000") == ("0.0.0.0", 9000)
    with pytest.raises(ValueError):
        parse_endpoint("9000")
