"""Worker-side pipeline over one horizontal strip of the DEM.

Each worker sees its owned rows plus up to two halo rows per side. It
computes flow directions locally (owned rows plus the first halo row each
side, bit-identical to the global computation), counts dependencies,
accumulates everything resolvable internally, walks the remaining paths
symbolically, sends one report to the master, and finalises from the single
reply. Exactly one message each way per worker, whatever the terrain does.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .d8 import NODATA_DIR, OFFSETS
from .grid import CellId, StripSpec
from .hydro import directions_for_band
from .transport import (
    BorderCellRecord,
    CellClass,
    MasterReply,
    ProtocolError,
    WorkerReport,
    decode_reply,
    encode_report,
)

# Path variables are globally unique without coordination: worker w hands out
# w * VAR_STRIDE, w * VAR_STRIDE + 1, ... and -1 is never allocated.
VAR_STRIDE = 1 << 40


@dataclass(frozen=True)
class StripFrame:
    """Geometry of one worker's local window onto the DEM.

    The local elevation/direction arrays cover global rows
    [read_start, read_stop); owned rows sit at local [own_lo, own_hi).
    """

    strip: StripSpec
    grid_rows: int
    cols: int

    @property
    def read_start(self) -> int:
        return self.strip.read_start

    @property
    def own_lo(self) -> int:
        return self.strip.row_start - self.read_start

    @property
    def own_hi(self) -> int:
        return self.strip.row_stop - self.read_start

    @property
    def local_rows(self) -> int:
        return self.strip.read_stop - self.read_start

    @property
    def has_above(self) -> bool:
        return self.strip.row_start > 0

    @property
    def has_below(self) -> bool:
        return self.strip.row_stop < self.grid_rows

    @property
    def band_lo(self) -> int:
        """First local row with computable flow directions (owned - 1 halo)."""
        return self.own_lo - (1 if self.has_above else 0)

    @property
    def band_hi(self) -> int:
        return self.own_hi + (1 if self.has_below else 0)

    def edge_rows(self) -> list[int]:
        """Local owned rows that face another worker (one row for 1-row strips)."""
        rows = []
        if self.has_above:
            rows.append(self.own_lo)
        last = self.own_hi - 1
        if self.has_below and last not in rows:
            rows.append(last)
        return rows

    def to_global(self, flat: int) -> CellId:
        r, c = divmod(int(flat), self.cols)
        return CellId(self.read_start + r, c)


@dataclass
class ReceiverSetup:
    """State captured while preparing the symbolic phase (paper's receivers).

    ``receivers[i]`` is the local flat index of the cell that owns path
    variable ``i``; the ``org_*`` arrays are linked origin lists with one
    initial entry per receiver.
    """

    deps_orig: np.ndarray
    halo_in: dict[int, int]
    receivers: list[int]
    seeds: np.ndarray
    path_vars: np.ndarray
    org_head: np.ndarray = field(default=None)
    org_tail: np.ndarray = field(default=None)
    org_next: np.ndarray = field(default=None)


def _row_chunks(lo: int, hi: int, threads: int) -> list[tuple[int, int]]:
    n = hi - lo
    t = max(1, min(threads, n))
    size = -(-n // t)
    return [(lo + i * size, min(hi, lo + (i + 1) * size)) for i in range(t) if lo + i * size < hi]


def strip_directions(frame: StripFrame, elev_local: np.ndarray, nodata: float,
                     threads: int = 1) -> np.ndarray:
    """D8 directions for owned rows plus the first halo row each side.

    Rows outside the band keep the excluded marker, so downstream kernels
    never see a direction the worker could not have computed. With more
    than one thread the band is split into contiguous row blocks; every
    block is an independent per-cell computation.
    """
    dirs = np.full(elev_local.shape, NODATA_DIR, dtype=np.int8)
    chunks = _row_chunks(frame.band_lo, frame.band_hi, threads)
    if len(chunks) <= 1:
        directions_for_band(elev_local, nodata, frame.band_lo, frame.band_hi, dirs)
        return dirs
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        list(pool.map(
            lambda span: directions_for_band(elev_local, nodata, span[0], span[1], dirs),
            chunks,
        ))
    return dirs


def find_dependencies(frame: StripFrame, dirs: np.ndarray,
                      threads: int = 1) -> tuple[np.ndarray, np.ndarray, int]:
    """Count inflows per owned cell and queue the zero-dependency ones.

    Halo-row inflows count too, so cells waiting on another worker keep a
    positive count through the internal phase. Multi-threaded runs build one
    queue per row block and concatenate them in block order, which
    reproduces the single-threaded row-major queue exactly.
    """
    h, w = dirs.shape
    deps = np.zeros((h, w), dtype=np.int8)
    chunks = _row_chunks(frame.own_lo, frame.own_hi, threads)
    if len(chunks) <= 1:
        queue = np.empty((frame.own_hi - frame.own_lo) * w, dtype=np.int64)
        n = kernels.count_dependencies(dirs, frame.own_lo, frame.own_hi, deps, queue)
        return deps, queue, n

    def _chunk(span):
        lo, hi = span
        q = np.empty((hi - lo) * w, dtype=np.int64)
        n = kernels.count_dependencies(dirs, lo, hi, deps, q)
        return q[:n]

    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(_chunk, chunks))
    queue = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return deps, queue, queue.size


def internal_upslope(frame: StripFrame, dirs: np.ndarray, deps: np.ndarray,
                     queue: np.ndarray, n_queue: int) -> np.ndarray:
    """Accumulate every owned cell reachable without crossing a halo dependency.

    Returns the area array (1 for every participating owned cell initially,
    0 elsewhere); cells blocked on another worker keep their partial state.
    """
    areas = np.zeros(dirs.shape, dtype=np.uint64)
    own = slice(frame.own_lo, frame.own_hi)
    areas[own][dirs[own] >= 0] = 1
    kernels.accumulate_internal(dirs, frame.own_lo, frame.own_hi, deps, areas, queue, n_queue)
    return areas


def _halo_inflows(frame: StripFrame, dirs: np.ndarray) -> dict[int, int]:
    """Cross-border inflow count per owned edge cell (local flat index)."""
    w = frame.cols
    counts: dict[int, int] = {}

    def _scan(halo_row, wanted_codes):
        base = halo_row * w
        for c in range(w):
            code = int(dirs[halo_row, c])
            if code in wanted_codes:
                dr, dc = OFFSETS[code]
                tc = c + dc
                if 0 <= tc < w:
                    t = base + dr * w + tc
                    counts[t] = counts.get(t, 0) + 1

    if frame.has_above:
        _scan(frame.own_lo - 1, (4, 5, 6))   # SE, S, SW out of the halo row above
    if frame.has_below:
        _scan(frame.own_hi, (1, 2, 8))       # N, NE, NW out of the halo row below
    return counts


def satisfy_receivers(frame: StripFrame, dirs: np.ndarray, deps: np.ndarray) -> ReceiverSetup:
    """Save the dependency grid, then release edge cells' cross-border deps.

    Every edge cell with at least one halo inflow becomes a receiver: it gets
    a path variable whose origin list starts as the cell itself. Receivers
    whose remaining dependencies all came from across the border are queued
    as seeds for the symbolic phase; edge cells already resolved internally
    are givers and are never touched.
    """
    deps_orig = deps.copy()
    halo_in = _halo_inflows(frame, dirs)
    deps_f = deps.ravel()
    path_vars = np.full(dirs.shape, -1, dtype=np.int64)
    vars_f = path_vars.ravel()
    receivers: list[int] = []
    seeds: list[int] = []
    w = frame.cols
    for row in frame.edge_rows():
        base = row * w
        for c in range(w):
            flat = base + c
            pulled = halo_in.get(flat, 0)
            if pulled == 0:
                continue
            if deps_f[flat] == 0:
                # Resolved internally: a giver, not re-processed. Unreachable
                # while halo inflows are counted in deps, kept as a guard.
                continue
            vars_f[flat] = len(receivers)
            receivers.append(flat)
            deps_f[flat] -= pulled
            if deps_f[flat] == 0:
                seeds.append(flat)
    n = len(receivers)
    setup = ReceiverSetup(
        deps_orig=deps_orig,
        halo_in=halo_in,
        receivers=receivers,
        seeds=np.array(seeds, dtype=np.int64),
        path_vars=path_vars,
        org_head=np.arange(n, dtype=np.int64),
        org_tail=np.arange(n, dtype=np.int64),
        org_next=np.full(n, -1, dtype=np.int64),
    )
    return setup


def external_upslope(frame: StripFrame, dirs: np.ndarray, deps: np.ndarray,
                     areas: np.ndarray, setup: ReceiverSetup) -> dict[int, list[int]]:
    """Resolve the rest of the strip, tracking path origins symbolically.

    Afterwards every owned participating cell's area equals its internal
    catchment (each receiver contributing just its own cell), and each
    surviving path variable is parked on its path's last owned cell with the
    receivers it passed through in its origin list.

    Returns {local variable -> origin cells (local flat indices)}.
    """
    if setup.seeds.size:
        kernels.external_upslope(
            dirs, frame.own_lo, frame.own_hi, deps, areas,
            setup.seeds, setup.seeds.size,
            setup.path_vars, setup.org_head, setup.org_tail, setup.org_next,
        )
    origins: dict[int, list[int]] = {}
    vars_f = setup.path_vars.ravel()
    for flat in np.flatnonzero(vars_f >= 0):
        var = int(vars_f[flat])
        cells = []
        e = int(setup.org_head[var])
        while e != -1:
            cells.append(setup.receivers[e])
            e = int(setup.org_next[e])
        origins[var] = cells
    return origins


def build_worker_report(frame: StripFrame, dirs: np.ndarray, areas: np.ndarray,
                        setup: ReceiverSetup, origins: dict[int, list[int]]) -> WorkerReport:
    """One record per participating edge cell facing another worker.

    Classes: receiver (has cross-border inflows; wire variable -1 unless a
    path also ends here), joiner (a path variable is parked here), giver
    (resolved internally). Cells whose flow exits the strip carry their
    target cell in global coordinates.
    """
    w = frame.cols
    wid = self_id = frame.strip.worker_id
    dirs_f = dirs.ravel()
    areas_f = areas.ravel()
    vars_f = setup.path_vars.ravel()
    records = []
    for row in frame.edge_rows():
        for c in range(w):
            flat = row * w + c
            code = int(dirs_f[flat])
            if code == NODATA_DIR:
                continue
            target = None
            if code > 0:
                dr, dc = OFFSETS[code]
                g_row = frame.read_start + row + dr
                if not frame.strip.row_start <= g_row < frame.strip.row_stop:
                    target = (g_row, c + dc)
            mark = int(vars_f[flat])
            var = None
            if setup.halo_in.get(flat, 0) > 0:
                cls = CellClass.RECEIVER
                var = wid * VAR_STRIDE + mark if mark >= 0 else -1
            elif mark >= 0:
                cls = CellClass.JOINER
                var = wid * VAR_STRIDE + mark
            else:
                cls = CellClass.GIVER
            g = frame.to_global(flat)
            records.append(BorderCellRecord(g.row, g.col, cls, int(areas_f[flat]), target, var))
    origin_entries = {
        self_id * VAR_STRIDE + var: tuple(tuple(frame.to_global(f)) for f in cells)
        for var, cells in sorted(origins.items())
    }
    return WorkerReport(worker_id=wid, records=tuple(records), origins=origin_entries)


def prep_finalise(frame: StripFrame, dirs: np.ndarray, setup: ReceiverSetup,
                  reply: MasterReply) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Restore the saved dependency grid and stage the reply's incoming areas.

    Every receiver gets its incoming area stored (zero included), whether or
    not it seeds a path directly: receivers still blocked on an internal
    dependency hand their stored sum to the path that reaches them.

    Returns (deps, deferred sums, seeds).
    """
    expected = {tuple(frame.to_global(f)) for f in setup.receivers}
    got = set(reply.incoming)
    if got != expected:
        extra = sorted(got - expected)
        missing = sorted(expected - got)
        raise ProtocolError(
            f"worker {frame.strip.worker_id}: reply does not match receivers "
            f"(unknown cells: {extra[:3]}, missing: {missing[:3]})"
        )
    deps = setup.deps_orig.copy()
    deps_f = deps.ravel()
    deferred = np.zeros(dirs.shape, dtype=np.uint64)
    def_f = deferred.ravel()
    seeds = []
    w = frame.cols
    for row in frame.edge_rows():
        for c in range(w):
            flat = row * w + c
            pulled = setup.halo_in.get(flat, 0)
            if pulled == 0 or deps_f[flat] == 0:
                continue
            deps_f[flat] -= pulled
            def_f[flat] = reply.incoming[tuple(frame.to_global(flat))]
            if deps_f[flat] == 0:
                seeds.append(flat)
    return deps, deferred, np.array(seeds, dtype=np.int64)


def finalise_internal(frame: StripFrame, dirs: np.ndarray, deps: np.ndarray,
                      areas: np.ndarray, seeds: np.ndarray, deferred: np.ndarray) -> None:
    """Propagate incoming areas downstream; afterwards owned areas are final."""
    if seeds.size:
        kernels.finalise_internal(
            dirs, frame.own_lo, frame.own_hi, deps, areas, seeds, seeds.size, deferred,
        )


def run_worker(frame: StripFrame, elev_local: np.ndarray, nodata: float,
               endpoint, threads: int = 1) -> np.ndarray:
    """Full worker pipeline; returns final areas for the owned rows."""
    dirs = strip_directions(frame, elev_local, nodata, threads)
    deps, queue, n_queue = find_dependencies(frame, dirs, threads)
    areas = internal_upslope(frame, dirs, deps, queue, n_queue)
    setup = satisfy_receivers(frame, dirs, deps)
    origins = external_upslope(frame, dirs, deps, areas, setup)
    report = build_worker_report(frame, dirs, areas, setup, origins)
    endpoint.send(encode_report(report))
    raw = endpoint.recv()
    if raw is None:
        raise ProtocolError(f"worker {frame.strip.worker_id}: link closed before reply")
    reply = decode_reply(raw)
    if reply.worker_id != frame.strip.worker_id:
        raise ProtocolError(
            f"worker {frame.strip.worker_id} got reply addressed to {reply.worker_id}"
        )
    deps2, deferred, seeds = prep_finalise(frame, dirs, setup, reply)
    finalise_internal(frame, dirs, deps2, areas, seeds, deferred)
    return areas[frame.own_lo:frame.own_hi].copy()
