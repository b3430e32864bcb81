"""TCP capture hub.

Sensor clients connect and stream EXU1 records.  Every record is appended to
its stream's log under that stream's lock, so each log has exactly one
writer at a time and per-stream order is arrival order.  Records whose
timestamp does not increase within their stream are dropped and counted.

    hub = Hub("127.0.0.1", 0, session_dir)
    hub.start()
    ...                       # clients connect to hub.address
    session = hub.stop()      # drains handlers, writes header.txt, fsyncs
"""

from __future__ import annotations

import logging
import os
import socket
import threading
import time
from pathlib import Path

from .protocol import (
    RawSession,
    RecordDecoder,
    SessionHeader,
    StreamKind,
    WireRecord,
    encode_record,
    load_session,
)

log = logging.getLogger(__name__)

POLL_INTERVAL = 0.1
DRAIN_SECONDS = 1.0
RECV_SIZE = 1 << 16


class _StreamLog:
    def __init__(self, path: Path):
        self.path = path
        self.lock = threading.Lock()
        self.fh = None
        self.last_t = float("-inf")
        self.count = 0

    def append(self, rec: WireRecord) -> bool:
        with self.lock:
            if not rec.t > self.last_t:
                return False
            if self.fh is None:
                self.fh = open(self.path, "ab")
            self.fh.write(encode_record(rec.kind, rec.t, rec.payload))
            self.last_t = rec.t
            self.count += 1
            return True

    def close(self) -> None:
        with self.lock:
            if self.fh is not None:
                self.fh.flush()
                os.fsync(self.fh.fileno())
                self.fh.close()
                self.fh = None


class Hub:
    def __init__(self, host: str, port: int, session_dir: str | os.PathLike, session_id: str | None = None):
        self.session_dir = Path(session_dir)
        self.session_dir.mkdir(parents=True, exist_ok=True)
        for kind in StreamKind:
            if (self.session_dir / kind.log_name).exists():
                raise FileExistsError(f"{self.session_dir / kind.log_name} already exists")
        self._sock = socket.create_server((host, port))
        self._sock.settimeout(POLL_INTERVAL)
        self.address = self._sock.getsockname()[:2]
        self._stop = threading.Event()
        self._logs = {k: _StreamLog(self.session_dir / k.log_name) for k in StreamKind}
        self._counter_lock = threading.Lock()
        self.counters = {"out_of_order_drops": 0, "protocol_errors": 0, "connections": 0}
        self._threads: list[threading.Thread] = []
        self._acceptor: threading.Thread | None = None
        self.header = SessionHeader(epoch=time.time())
        if session_id:
            self.header.session_id = session_id

    def _bump(self, key: str) -> None:
        with self._counter_lock:
            self.counters[key] = self.counters.get(key, 0) + 1

    def start(self) -> "Hub":
        self._acceptor = threading.Thread(target=self._accept_loop, name="hub-accept", daemon=True)
        self._acceptor.start()
        return self

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, peer = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            self._bump("connections")
            th = threading.Thread(target=self._handle, args=(conn, peer), daemon=True)
            self._threads.append(th)
            th.start()

    def _handle(self, conn: socket.socket, peer) -> None:
        dec = RecordDecoder()
        conn.settimeout(POLL_INTERVAL)
        try:
            drain_deadline = None
            while True:
                if self._stop.is_set():
                    if drain_deadline is None:
                        drain_deadline = time.monotonic() + DRAIN_SECONDS
                    elif time.monotonic() > drain_deadline:
                        break
                try:
                    data = conn.recv(RECV_SIZE)
                except socket.timeout:
                    if self._stop.is_set():
                        break
                    continue
                except OSError as exc:
                    log.warning("connection %s dropped: %s", peer, exc)
                    break
                if not data:
                    if dec.pending:
                        log.warning("connection %s closed with %d-byte partial record", peer, dec.pending)
                    break
                for rec in dec.feed(data):
                    if not self._logs[rec.kind].append(rec):
                        self._bump("out_of_order_drops")
                if dec.error is not None:
                    self._bump("protocol_errors")
                    log.warning("closing %s: %s", peer, dec.error.diagnostic())
                    break
        finally:
            conn.close()

    def stop(self) -> RawSession:
        self._stop.set()
        if self._acceptor is not None:
            self._acceptor.join()
        self._sock.close()
        for th in self._threads:
            th.join()
        for sl in self._logs.values():
            sl.close()
        self.header.streams = tuple(k for k, sl in self._logs.items() if sl.count)
        self.header.counters = dict(self.counters)
        hp = self.session_dir / "header.txt"
        with open(hp, "w") as fh:
            fh.write(self.header.dumps())
            fh.flush()
            os.fsync(fh.fileno())
        return load_session(self.session_dir)

    def __enter__(self) -> "Hub":
        return self.start()

    def __exit__(self, *exc) -> None:
        if not self._stop.is_set():
            self.stop()


def send_records(address, records, chunk: int = 256) -> None:
    """Minimal client: connect, send every record, close."""
    with socket.create_connection(tuple(address)) as s:
        buf = []
        for i, rec in enumerate(records, 1):
            buf.append(encode_record(rec.kind, rec.t, rec.payload))
            if i % chunk == 0:
                s.sendall(b"".join(buf))
                buf.clear()
        if buf:
            s.sendall(b"".join(buf))


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)
