"""Wire messages, binary codec, pluggable delivery, and message accounting.

The protocol is two fixed messages: one report per worker to the master, one
reply per worker back. Payloads are versioned little-endian binary with
length-prefixed records; cells travel as (row, col) in global DEM
coordinates. Two transports cover thread- and process-style deployment:
in-process FIFO queues, and one spool file per message named
``msg_<from>_<to>.bin`` (written to a temp name and atomically renamed, so a
polling reader never sees a partial message).
"""

from __future__ import annotations

import os
import queue
import struct
import threading
import time
from dataclasses import dataclass, field

PROTOCOL_VERSION = 1
MSG_REPORT = 1
MSG_REPLY = 2

RECV_TIMEOUT = 60.0
SPOOL_POLL_INTERVAL = 0.001


class CodecError(ValueError):
    """Malformed, truncated, or wrong-version message bytes."""


class TransportError(RuntimeError):
    """Link misuse or delivery failure (closed link, spool I/O, timeout)."""


class ProtocolError(RuntimeError):
    """Messages violate the worker/master contract."""


class CellClass:
    GIVER = 0
    RECEIVER = 1
    JOINER = 2
    _NAMES = {0: "giver", 1: "receiver", 2: "joiner"}

    @classmethod
    def name(cls, value: int) -> str:
        return cls._NAMES[value]


@dataclass(frozen=True, eq=True)
class BorderCellRecord:
    """One edge cell facing another worker.

    ``target`` is the global cell the flow exits into, when it leaves the
    strip. ``var`` is the path variable parked here (-1 marks a plain
    receiver, None a giver).
    """

    row: int
    col: int
    cls: int
    area: int
    target: tuple[int, int] | None = None
    var: int | None = None


@dataclass(eq=True)
class WorkerReport:
    worker_id: int
    records: tuple[BorderCellRecord, ...] = ()
    origins: dict[int, tuple[tuple[int, int], ...]] = field(default_factory=dict)
    version: int = PROTOCOL_VERSION


@dataclass(eq=True)
class MasterReply:
    worker_id: int
    incoming: dict[tuple[int, int], int] = field(default_factory=dict)
    version: int = PROTOCOL_VERSION


_HEADER = struct.Struct("<BBI")
_U32 = struct.Struct("<I")
_RECORD_FIXED = struct.Struct("<IIBBQ")
_TARGET = struct.Struct("<II")
_VAR = struct.Struct("<q")
_ORIGIN_HEAD = struct.Struct("<qI")
_CELL = struct.Struct("<II")
_INCOMING = struct.Struct("<IIQ")

_FLAG_TARGET = 1
_FLAG_VAR = 2


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def unpack(self, st: struct.Struct):
        if self.off + st.size > len(self.buf):
            raise CodecError("truncated message")
        out = st.unpack_from(self.buf, self.off)
        self.off += st.size
        return out

    def remaining(self) -> int:
        return len(self.buf) - self.off

    def done(self):
        if self.remaining():
            raise CodecError(f"{self.remaining()} trailing byte(s) after message")


def _check_header(rd: _Reader, expected_type: int) -> int:
    version, msg_type, worker_id = rd.unpack(_HEADER)
    if version != PROTOCOL_VERSION:
        raise CodecError(f"unsupported protocol version {version}")
    if msg_type != expected_type:
        raise CodecError(f"unexpected message type {msg_type}, wanted {expected_type}")
    return worker_id


def encode_report(report: WorkerReport) -> bytes:
    out = [_HEADER.pack(report.version, MSG_REPORT, report.worker_id)]
    out.append(_U32.pack(len(report.records)))
    for rec in report.records:
        flags = (_FLAG_TARGET if rec.target is not None else 0) | (
            _FLAG_VAR if rec.var is not None else 0
        )
        payload = [_RECORD_FIXED.pack(rec.row, rec.col, rec.cls, flags, rec.area)]
        if rec.target is not None:
            payload.append(_TARGET.pack(*rec.target))
        if rec.var is not None:
            payload.append(_VAR.pack(rec.var))
        body = b"".join(payload)
        out.append(_U32.pack(len(body)))
        out.append(body)
    out.append(_U32.pack(len(report.origins)))
    for var, cells in report.origins.items():
        body = [_ORIGIN_HEAD.pack(var, len(cells))]
        body.extend(_CELL.pack(r, c) for r, c in cells)
        blob = b"".join(body)
        out.append(_U32.pack(len(blob)))
        out.append(blob)
    return b"".join(out)


def decode_report(buf: bytes) -> WorkerReport:
    rd = _Reader(buf)
    worker_id = _check_header(rd, MSG_REPORT)
    (n_records,) = rd.unpack(_U32)
    records = []
    for _ in range(n_records):
        (length,) = rd.unpack(_U32)
        end = rd.off + length
        if end > len(rd.buf):
            raise CodecError("record length field runs past the payload")
        row, col, cls, flags, area = rd.unpack(_RECORD_FIXED)
        if cls not in (CellClass.GIVER, CellClass.RECEIVER, CellClass.JOINER):
            raise CodecError(f"unknown border cell class {cls}")
        target = None
        if flags & _FLAG_TARGET:
            target = tuple(rd.unpack(_TARGET))
        var = None
        if flags & _FLAG_VAR:
            (var,) = rd.unpack(_VAR)
        if rd.off != end:
            raise CodecError("malformed record: length does not match contents")
        records.append(BorderCellRecord(row, col, cls, area, target, var))
    (n_origins,) = rd.unpack(_U32)
    origins = {}
    for _ in range(n_origins):
        (length,) = rd.unpack(_U32)
        end = rd.off + length
        if end > len(rd.buf):
            raise CodecError("origin length field runs past the payload")
        var, count = rd.unpack(_ORIGIN_HEAD)
        cells = tuple(tuple(rd.unpack(_CELL)) for _ in range(count))
        if rd.off != end:
            raise CodecError("malformed origin entry: length does not match contents")
        if var in origins:
            raise CodecError(f"duplicate origin entry for variable {var}")
        origins[var] = cells
    rd.done()
    return WorkerReport(worker_id=worker_id, records=tuple(records), origins=origins)


def encode_reply(reply: MasterReply) -> bytes:
    out = [_HEADER.pack(reply.version, MSG_REPLY, reply.worker_id)]
    out.append(_U32.pack(len(reply.incoming)))
    for (row, col), area in reply.incoming.items():
        out.append(_INCOMING.pack(row, col, area))
    return b"".join(out)


def decode_reply(buf: bytes) -> MasterReply:
    rd = _Reader(buf)
    worker_id = _check_header(rd, MSG_REPLY)
    (n,) = rd.unpack(_U32)
    incoming = {}
    for _ in range(n):
        row, col, area = rd.unpack(_INCOMING)
        if (row, col) in incoming:
            raise CodecError(f"duplicate incoming entry for cell ({row}, {col})")
        incoming[(row, col)] = area
    rd.done()
    return MasterReply(worker_id=worker_id, incoming=incoming)


WORKER_TO_MASTER = "worker_to_master"
MASTER_TO_WORKER = "master_to_worker"


class CommStats:
    """Thread-safe send accounting plus the run's winding diagnostics."""

    def __init__(self):
        self._lock = threading.Lock()
        self.worker_to_master = 0
        self.master_to_worker = 0
        self.bytes_worker_to_master = 0
        self.bytes_master_to_worker = 0
        self.winding_crossings = 0
        self.winding_factor = 0.0

    def record_send(self, direction: str, nbytes: int) -> None:
        with self._lock:
            if direction == WORKER_TO_MASTER:
                self.worker_to_master += 1
                self.bytes_worker_to_master += nbytes
            elif direction == MASTER_TO_WORKER:
                self.master_to_worker += 1
                self.bytes_master_to_worker += nbytes
            else:
                raise ValueError(f"unknown direction {direction!r}")

    def set_winding(self, crossings: int, factor: float) -> None:
        with self._lock:
            self.winding_crossings = crossings
            self.winding_factor = factor

    @property
    def total_bytes(self) -> int:
        return self.bytes_worker_to_master + self.bytes_master_to_worker

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "worker_to_master_messages": self.worker_to_master,
                "master_to_worker_messages": self.master_to_worker,
                "worker_to_master_bytes": self.bytes_worker_to_master,
                "master_to_worker_bytes": self.bytes_master_to_worker,
                "total_bytes": self.total_bytes,
                "winding_crossings": self.winding_crossings,
                "winding_factor": self.winding_factor,
            }


class _ClosedMarker:
    pass


_CLOSED = _ClosedMarker()


class InProcessLink:
    """One-directional FIFO between two threads."""

    def __init__(self, stats: CommStats | None, direction: str):
        self._queue: queue.Queue = queue.Queue()
        self._stats = stats
        self._direction = direction
        self._closed = False

    def send(self, payload: bytes) -> None:
        if self._closed:
            raise TransportError("send on closed link")
        self._queue.put(bytes(payload))
        if self._stats is not None:
            self._stats.record_send(self._direction, len(payload))

    def recv(self, timeout: float | None = RECV_TIMEOUT) -> bytes | None:
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise TransportError("recv timed out") from None
        if item is _CLOSED:
            self._queue.put(_CLOSED)  # keep signalling end-of-stream
            return None
        return item

    def close(self) -> None:
        self._closed = True
        self._queue.put(_CLOSED)


class SpoolFileLink:
    """One-directional, one-message link through a spool file.

    The file name is fixed per (sender, recipient) pair; writing twice is an
    error by construction of the protocol's communication bound.
    """

    def __init__(self, directory: str, sender: str, recipient: str,
                 stats: CommStats | None, direction: str):
        self.path = os.path.join(directory, f"msg_{sender}_{recipient}.bin")
        self._stats = stats
        self._direction = direction
        self._closed = False

    def send(self, payload: bytes) -> None:
        if self._closed:
            raise TransportError("send on closed link")
        if os.path.exists(self.path):
            raise TransportError(f"spool link already carried a message: {self.path}")
        tmp = f"{self.path}.tmp"
        try:
            with open(tmp, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, self.path)
        except OSError as exc:
            raise TransportError(f"spool write failed: {exc}") from exc
        if self._stats is not None:
            self._stats.record_send(self._direction, len(payload))

    def recv(self, timeout: float | None = RECV_TIMEOUT) -> bytes | None:
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            if os.path.exists(self.path):
                try:
                    with open(self.path, "rb") as fh:
                        return fh.read()
                except OSError as exc:
                    raise TransportError(f"spool read failed: {exc}") from exc
            if self._closed:
                return None
            if deadline is not None and time.monotonic() >= deadline:
                raise TransportError(f"timed out waiting for {self.path}")
            time.sleep(SPOOL_POLL_INTERVAL)

    def close(self) -> None:
        self._closed = True


@dataclass
class Endpoint:
    """One side of a duplex link."""

    outgoing: object
    incoming: object

    def send(self, payload: bytes) -> None:
        self.outgoing.send(payload)

    def recv(self, timeout: float | None = RECV_TIMEOUT) -> bytes | None:
        return self.incoming.recv(timeout)

    def close(self) -> None:
        self.outgoing.close()
        self.incoming.close()


def make_links(workers: int, stats: CommStats | None = None, transport: str = "inprocess",
               spool_dir: str | None = None) -> tuple[list[Endpoint], list[Endpoint]]:
    """Duplex endpoints for every worker<->master pair.

    Returns (worker-side endpoints, master-side endpoints), index-aligned by
    worker. A spool run removes leftover message files for its pairs first,
    so a directory can be reused across runs.
    """
    worker_eps = []
    master_eps = []
    if transport == "inprocess":
        for _ in range(workers):
            up = InProcessLink(stats, WORKER_TO_MASTER)
            down = InProcessLink(stats, MASTER_TO_WORKER)
            worker_eps.append(Endpoint(outgoing=up, incoming=down))
            master_eps.append(Endpoint(outgoing=down, incoming=up))
    elif transport == "spool":
        if not spool_dir:
            raise ValueError("spool transport needs a directory")
        os.makedirs(spool_dir, exist_ok=True)
        for w in range(workers):
            up = SpoolFileLink(spool_dir, f"w{w}", "master", stats, WORKER_TO_MASTER)
            down = SpoolFileLink(spool_dir, "master", f"w{w}", stats, MASTER_TO_WORKER)
            for link in (up, down):
                if os.path.exists(link.path):
                    os.unlink(link.path)
            worker_eps.append(Endpoint(outgoing=up, incoming=down))
            master_eps.append(Endpoint(outgoing=down, incoming=up))
    else:
        raise ValueError(f"unknown transport {transport!r}")
    return worker_eps, master_eps
