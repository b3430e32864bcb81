"""EXU1 wire records, stream payload layouts, and session directories.

Record layout (all little-endian)::

    offset size field
    0      4    magic  b"EXU1"
    4      1    stream id (StreamKind)
    5      8    timestamp, float64 seconds (sender clock)
    13     4    payload length, uint32 (<= 1 MiB)
    17     n    payload

A session directory holds ``header.txt`` plus one log per stream; each log
is a plain concatenation of records, so a crash loses at most a partial
tail record.
"""

from __future__ import annotations

import enum
import heapq
import os
import struct
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    BadMagic,
    CorruptLog,
    OversizePayload,
    PayloadLayoutError,
    SessionFormatError,
    TruncatedRecord,
    UnknownStream,
)
from .geometry import Pose6D, PoseSample

MAGIC = b"EXU1"
HEADER = struct.Struct("<4sBdI")
HEADER_SIZE = HEADER.size  # 17
MAX_PAYLOAD = 1 << 20
SESSION_ENV = "DEMOSYNC_SESSION_DIR"
HEADER_FORMAT_VERSION = 1


class StreamKind(enum.IntEnum):
    POSE = 1
    ENCODER = 2
    TACTILE = 3
    VIDEO_META = 4
    MARKER = 5

    @property
    def log_name(self) -> str:
        return f"{self.name.lower()}.log"


@dataclass(frozen=True)
class WireRecord:
    kind: StreamKind
    t: float
    payload: bytes

    def bit_equal(self, other: "WireRecord") -> bool:
        return (
            self.kind == other.kind
            and struct.pack("<d", self.t) == struct.pack("<d", other.t)
            and self.payload == other.payload
        )


# ------------------------------------------------------------------ payloads

_POSE = struct.Struct("<7d")
_ENCODER = struct.Struct("<H")
_TACTILE_HEAD = struct.Struct("<BHH")
_VIDEO = struct.Struct("<I")
_MARKER = struct.Struct("<2d")


def pose_payload(pose: Pose6D) -> bytes:
    return _POSE.pack(*pose.as_array().tolist())


def encoder_payload(raw: int) -> bytes:
    return _ENCODER.pack(raw)


def tactile_payload(sensor_id: int, pixels: np.ndarray) -> bytes:
    h, w = pixels.shape
    return _TACTILE_HEAD.pack(sensor_id, h, w) + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def video_payload(frame_index: int) -> bytes:
    return _VIDEO.pack(frame_index)


def marker_payload(u: float, v: float) -> bytes:
    return _MARKER.pack(u, v)


def _check_len(kind: StreamKind, payload: bytes, expected: int) -> None:
    if len(payload) != expected:
        raise PayloadLayoutError(f"{kind.name} payload is {len(payload)} bytes, expected {expected}")


def check_payload(kind: StreamKind, payload: bytes) -> None:
    if kind is StreamKind.POSE:
        _check_len(kind, payload, _POSE.size)
    elif kind is StreamKind.ENCODER:
        _check_len(kind, payload, _ENCODER.size)
        if _ENCODER.unpack(payload)[0] >= 4096:
            raise PayloadLayoutError("encoder count above 4095")
    elif kind is StreamKind.TACTILE:
        if len(payload) < _TACTILE_HEAD.size:
            raise PayloadLayoutError("tactile payload shorter than its header")
        sid, h, w = _TACTILE_HEAD.unpack_from(payload)
        _check_len(kind, payload, _TACTILE_HEAD.size + h * w)
        if sid not in (0, 1):
            raise PayloadLayoutError(f"tactile sensor id {sid} not in {{0, 1}}")
    elif kind is StreamKind.VIDEO_META:
        _check_len(kind, payload, _VIDEO.size)
    elif kind is StreamKind.MARKER:
        _check_len(kind, payload, _MARKER.size)


def decode_pose(rec: WireRecord) -> PoseSample:
    return PoseSample(rec.t, Pose6D.from_array(_POSE.unpack(rec.payload)))


def decode_pose_raw(rec: WireRecord) -> tuple[float, ...]:
    """The 7 doubles as sent, without renormalisation."""
    return _POSE.unpack(rec.payload)


def decode_encoder(rec: WireRecord) -> int:
    return _ENCODER.unpack(rec.payload)[0]


def decode_tactile(rec: WireRecord) -> tuple[int, np.ndarray]:
    sid, h, w = _TACTILE_HEAD.unpack_from(rec.payload)
    pix = np.frombuffer(rec.payload, dtype=np.uint8, offset=_TACTILE_HEAD.size, count=h * w)
    return sid, pix.reshape(h, w)


def decode_video(rec: WireRecord) -> int:
    return _VIDEO.unpack(rec.payload)[0]


def decode_marker(rec: WireRecord) -> tuple[float, float]:
    return _MARKER.unpack(rec.payload)


# ------------------------------------------------------------------- framing


def encode_record(kind: StreamKind | int, t: float, payload: bytes) -> bytes:
    try:
        kind = StreamKind(kind)
    except ValueError:
        raise UnknownStream(f"stream id {kind}") from None
    if len(payload) > MAX_PAYLOAD:
        raise OversizePayload(f"{len(payload)} bytes > {MAX_PAYLOAD}")
    check_payload(kind, payload)
    return HEADER.pack(MAGIC, int(kind), float(t), len(payload)) + bytes(payload)


def _parse_header(buf, offset: int = 0) -> tuple[StreamKind, float, int]:
    magic, sid, t, n = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise BadMagic(f"got {bytes(magic)!r} at offset {offset}")
    if n > MAX_PAYLOAD:
        raise OversizePayload(f"declared {n} bytes at offset {offset}")
    try:
        kind = StreamKind(sid)
    except ValueError:
        raise UnknownStream(f"stream id {sid} at offset {offset}") from None
    return kind, t, n


def decode_record(data: bytes) -> WireRecord:
    """Decode exactly one record; trailing bytes are an error."""
    if len(data) < HEADER_SIZE:
        if data[: len(MAGIC)] != MAGIC[: len(data)]:
            raise BadMagic(f"got {bytes(data[:4])!r}")
        raise TruncatedRecord(f"{len(data)} bytes < {HEADER_SIZE}-byte header")
    kind, t, n = _parse_header(data)
    if len(data) < HEADER_SIZE + n:
        raise TruncatedRecord(f"payload has {len(data) - HEADER_SIZE} of {n} bytes")
    if len(data) > HEADER_SIZE + n:
        raise PayloadLayoutError(f"{len(data) - HEADER_SIZE - n} trailing bytes after record")
    payload = bytes(data[HEADER_SIZE:])
    check_payload(kind, payload)
    return WireRecord(kind, t, payload)


class RecordDecoder:
    """Incremental decoder for a byte stream of records.

    ``feed`` returns every complete record; an incomplete tail stays
    buffered.  A framing error stops decoding: the records before it are
    still returned and the exception is kept in ``error`` (later feeds
    return nothing).  ``offset`` counts consumed bytes.
    """

    def __init__(self):
        self._buf = bytearray()
        self.offset = 0
        self.error: Exception | None = None

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> list[WireRecord]:
        if self.error is not None:
            return []
        self._buf += data
        out = []
        pos = 0
        buf = self._buf
        try:
            while len(buf) - pos >= HEADER_SIZE:
                kind, t, n = _parse_header(buf, pos)
                end = pos + HEADER_SIZE + n
                if end > len(buf):
                    break
                payload = bytes(buf[pos + HEADER_SIZE : end])
                check_payload(kind, payload)
                out.append(WireRecord(kind, t, payload))
                pos = end
            tail = bytes(buf[pos : pos + 4])
            if tail != MAGIC[: len(tail)]:
                raise BadMagic(f"got {tail!r}")
        except (BadMagic, OversizePayload, UnknownStream, PayloadLayoutError) as exc:
            exc.context = f"{exc.context} (stream offset {self.offset + pos})"
            self.error = exc
        del buf[:pos]
        self.offset += pos
        return out


def decode_stream(data: bytes) -> tuple[list[WireRecord], bytes]:
    """Split a byte prefix into complete records and the partial tail."""
    dec = RecordDecoder()
    recs = dec.feed(data)
    if dec.error is not None:
        raise dec.error
    return recs, bytes(dec._buf)


def iter_records(data: bytes) -> Iterator[tuple[int, WireRecord]]:
    """(offset, record) pairs over a complete buffer; raises CorruptLog on a
    bad or partial record after yielding everything before it."""
    pos = 0
    n_total = len(data)
    while pos < n_total:
        try:
            if n_total - pos < HEADER_SIZE:
                raise TruncatedRecord(f"{n_total - pos} trailing bytes")
            kind, t, n = _parse_header(data, pos)
            end = pos + HEADER_SIZE + n
            if end > n_total:
                raise TruncatedRecord(f"payload has {n_total - pos - HEADER_SIZE} of {n} bytes")
            payload = bytes(data[pos + HEADER_SIZE : end])
            check_payload(kind, payload)
        except (BadMagic, TruncatedRecord, OversizePayload, UnknownStream, PayloadLayoutError) as exc:
            raise CorruptLog(f"offset={pos} {exc.code}: {exc.context}") from exc
        yield pos, WireRecord(kind, t, payload)
        pos = end


# ------------------------------------------------------------------ sessions


@dataclass
class SessionHeader:
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])
    epoch: float = 0.0
    streams: tuple[StreamKind, ...] = ()
    tactile_shape: tuple[int, int] = (0, 0)
    counters: dict[str, int] = field(default_factory=dict)

    def dumps(self) -> str:
        lines = [
            "# demosync session",
            f"format_version = {HEADER_FORMAT_VERSION}",
            f"session_id = {self.session_id}",
            f"epoch = {self.epoch!r}",
            "streams = " + " ".join(k.name for k in sorted(self.streams)),
            f"tactile_shape = {self.tactile_shape[0]} {self.tactile_shape[1]}",
        ]
        lines += [f"counter.{k} = {v}" for k, v in sorted(self.counters.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SessionHeader":
        meta = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SessionFormatError(f"bad header line {line!r}")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
        try:
            if meta.get("format_version") != str(HEADER_FORMAT_VERSION):
                raise SessionFormatError(f"unsupported format_version {meta.get('format_version')!r}")
            streams = tuple(StreamKind[n] for n in meta.get("streams", "").split())
            h, w = (int(x) for x in meta.get("tactile_shape", "0 0").split())
            counters = {k[len("counter.") :]: int(v) for k, v in meta.items() if k.startswith("counter.")}
            return cls(meta["session_id"], float(meta.get("epoch", "0")), streams, (h, w), counters)
        except (KeyError, ValueError) as exc:
            raise SessionFormatError(f"header: {exc}") from None


@dataclass
class RawSession:
    header: SessionHeader
    logs: dict[StreamKind, list[WireRecord]]
    warnings: list[str] = field(default_factory=list)

    def records(self, kind: StreamKind) -> list[WireRecord]:
        return self.logs.get(kind, [])

    def has(self, kind: StreamKind) -> bool:
        return len(self.logs.get(kind, [])) > 0

    def pose_track(self) -> list[PoseSample]:
        return [decode_pose(r) for r in self.records(StreamKind.POSE)]

    def times(self, kind: StreamKind) -> np.ndarray:
        return np.array([r.t for r in self.records(kind)], dtype=float)


def session_dir_default() -> Path:
    return Path(os.environ.get(SESSION_ENV, "sessions"))


def validate_session(session: RawSession) -> None:
    for kind, recs in session.logs.items():
        ts = np.array([r.t for r in recs])
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise SessionFormatError(f"{kind.name} timestamps not strictly increasing")
        if any(r.kind != kind for r in recs):
            raise SessionFormatError(f"{kind.log_name} holds records of another stream")


def write_session(session: RawSession, directory: str | os.PathLike) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    present = tuple(sorted(k for k, v in session.logs.items() if v))
    session.header.streams = present
    for kind in StreamKind:
        path = d / kind.log_name
        recs = session.logs.get(kind)
        if recs:
            with open(path, "wb") as fh:
                fh.write(b"".join(encode_record(r.kind, r.t, r.payload) for r in recs))
        elif path.exists():
            path.unlink()
    (d / "header.txt").write_text(session.header.dumps())
    return d


def load_session(directory: str | os.PathLike, strict: bool = True) -> RawSession:
    """Read a session directory.

    With ``strict=False`` a corrupt log tail is cut off and noted in
    ``warnings`` instead of raising, which is the crash-recovery path.
    """
    d = Path(directory)
    hp = d / "header.txt"
    if not hp.is_file():
        raise SessionFormatError(f"{d}: missing header.txt")
    header = SessionHeader.loads(hp.read_text())
    logs: dict[StreamKind, list[WireRecord]] = {}
    warnings: list[str] = []
    for kind in StreamKind:
        path = d / kind.log_name
        if not path.exists():
            if kind in header.streams:
                raise SessionFormatError(f"{d}: header lists {kind.name} but {kind.log_name} is missing")
            continue
        data = path.read_bytes()
        recs = []
        try:
            for _, rec in iter_records(data):
                if rec.kind != kind:
                    raise CorruptLog(f"{path.name}: {rec.kind.name} record in {kind.name} log")
                recs.append(rec)
        except CorruptLog as exc:
            if strict:
                raise CorruptLog(f"{path}: {exc.context}") from None
            warnings.append(f"truncated {kind.log_name}: {exc.context}")
        logs[kind] = recs
    session = RawSession(header, logs, warnings)
    validate_session(session)
    return session


def replay_session(directory: str | os.PathLike) -> Iterator[tuple[StreamKind, WireRecord]]:
    """All records in global timestamp order; ties go to the lower stream
    code, then to stream-local order."""
    d = Path(directory)
    header = SessionHeader.loads((d / "header.txt").read_text())

    def stream(kind: StreamKind) -> Iterator[tuple[float, int, int, WireRecord]]:
        path = d / kind.log_name
        data = path.read_bytes()
        try:
            for i, (_, rec) in enumerate(iter_records(data)):
                yield (rec.t, int(kind), i, rec)
        except CorruptLog as exc:
            raise CorruptLog(f"{path}: {exc.context}") from None

    kinds = []
    for k in sorted(StreamKind):
        if (d / k.log_name).exists():
            kinds.append(k)
        elif k in header.streams:
            raise SessionFormatError(f"{d}: header lists {k.name} but {k.log_name} is missing")
    for t, code, _, rec in heapq.merge(*(stream(k) for k in kinds)):
        yield StreamKind(code), rec


def records_to_bytes(records: Iterable[WireRecord]) -> bytes:
    return b"".join(encode_record(r.kind, r.t, r.payload) for r in records)
