"""Flow directions, pit and flat preprocessing, and serial up-slope oracles.

The two accumulation routines here are the reference implementations the
distributed pipeline is verified against: :func:`serial_accumulate` runs the
dependency-queue propagation on the whole DEM as a single strip, and
:func:`naive_accumulate` literally walks every cell's flow path (intended
for tiny grids only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .d8 import ESRI_CODES, FlowDir, NODATA_DIR, OFFSETS
from .grid import DEFAULT_NODATA, ElevationGrid


class FlatSurfaceError(ValueError):
    """A cell has equal-elevation neighbors but no downslope: preprocessing missing."""


class FlowCycleError(RuntimeError):
    """Defensive: flow directions contain a cycle (acyclicity precondition broken)."""


@dataclass
class FlowField:
    """Per-cell D8 directions. -1 marks excluded (nodata) cells, 0 an outlet."""

    dirs: np.ndarray

    def __post_init__(self):
        self.dirs = np.ascontiguousarray(self.dirs, dtype=np.int8)

    @property
    def rows(self) -> int:
        return self.dirs.shape[0]

    @property
    def cols(self) -> int:
        return self.dirs.shape[1]

    @property
    def participating(self) -> np.ndarray:
        return self.dirs >= 0

    def direction(self, row: int, col: int) -> FlowDir:
        code = int(self.dirs[row, col])
        return FlowDir.OUTLET if code < 0 else FlowDir(code)

    def target(self, row: int, col: int) -> tuple[int, int] | None:
        code = int(self.dirs[row, col])
        if code <= 0:
            return None
        dr, dc = OFFSETS[code]
        return row + dr, col + dc


@dataclass
class AreaGrid:
    """Accumulated up-slope cell counts; 0 marks nodata cells."""

    areas: np.ndarray
    cellsize: float = 1.0
    nodata_value: float = DEFAULT_NODATA
    xllcorner: float = 0.0
    yllcorner: float = 0.0

    def __post_init__(self):
        self.areas = np.ascontiguousarray(self.areas, dtype=np.uint64)

    @property
    def rows(self) -> int:
        return self.areas.shape[0]

    @property
    def cols(self) -> int:
        return self.areas.shape[1]

    def __eq__(self, other):
        if not isinstance(other, AreaGrid):
            return NotImplemented
        return self.areas.shape == other.areas.shape and np.array_equal(self.areas, other.areas)


def directions_for_band(values, nodata, row_lo, row_hi, dirs_out=None):
    """Fill D8 directions for rows [row_lo, row_hi); raise on remaining flats."""
    if dirs_out is None:
        dirs_out = np.full(values.shape, NODATA_DIR, dtype=np.int8)
    n_flat, r, c = kernels.flow_directions(values, nodata, row_lo, row_hi, dirs_out)
    if n_flat:
        raise FlatSurfaceError(
            f"{n_flat} cell(s) have an equal-elevation neighbor but no downslope, "
            f"first at ({r}, {c}); fill pits and resolve flats first"
        )
    return dirs_out


def compute_flow_directions(grid: ElevationGrid) -> FlowField:
    """Steepest-slope D8 direction per cell (slope over Euclidean distance).

    Requires a pit-filled, flat-resolved grid: a cell with equal-elevation
    neighbors but no strictly lower one (and no border or nodata drain)
    raises :class:`FlatSurfaceError`. Ties between equally steep neighbors
    break on the fixed N, NE, E, SE, S, SW, W, NW scan order.
    """
    dirs = directions_for_band(grid.values, grid.nodata_value, 0, grid.rows)
    return FlowField(dirs)


def fill_pits(grid: ElevationGrid) -> ElevationGrid:
    """Raise cells until every one has a non-ascending path off the grid.

    Priority-flood sweep seeded at grid-border and nodata-adjacent cells;
    elevations only ever increase.
    """
    filled = kernels.fill_pits(grid.values, grid.nodata_value)
    return ElevationGrid(filled, grid.cellsize, grid.nodata_value, grid.xllcorner, grid.yllcorner)


def _neighbor_planes(values, nodata):
    """Yield (neighbor values, participating) planes for each of the 8 offsets."""
    h, w = values.shape
    padded = np.full((h + 2, w + 2), nodata, dtype=np.float64)
    padded[1:-1, 1:-1] = values
    for code in range(1, 9):
        dr, dc = OFFSETS[code]
        nb = padded[1 + dr : 1 + h + dr, 1 + dc : 1 + w + dc]
        yield nb, nb != nodata


def flat_epsilon(values, nodata) -> float:
    """Largest per-level increment that can never reorder distinct elevations.

    The minimum nonzero gap between distinct participating elevations divided
    by an upper bound on any breadth-first depth (the cell count).
    """
    part = values[values != nodata]
    uniq = np.unique(part)
    if uniq.size >= 2:
        return float(np.diff(uniq).min()) / (values.size + 1)
    # Single distinct elevation: nothing can be reordered, one ulp per level.
    v = float(abs(uniq[0])) if uniq.size else 1.0
    return float(np.spacing(v)) if v else float(np.spacing(1.0))


def resolve_flats(grid: ElevationGrid) -> ElevationGrid:
    """Impose a strict gradient on flat regions (pits must be filled first).

    Cells with no strictly lower neighbor and no drain of their own (grid
    border or nodata neighbor) are raised by k*epsilon, where k is their
    breadth-first depth within the equal-elevation region from its draining
    cells. Afterwards every such cell has a strictly lower neighbor.
    """
    values = grid.values
    nodata = grid.nodata_value
    part = grid.participating

    has_lower = np.zeros(values.shape, dtype=bool)
    exempt = np.zeros(values.shape, dtype=bool)
    for nb, nb_part in _neighbor_planes(values, nodata):
        has_lower |= nb_part & (nb < values)
        exempt |= ~nb_part
    needs_fix = part & ~has_lower & ~exempt
    if not needs_fix.any():
        return ElevationGrid(values.copy(), grid.cellsize, nodata, grid.xllcorner, grid.yllcorner)

    eps = flat_epsilon(values, nodata)
    out = values.copy()
    h, w = values.shape
    vf = values.ravel()
    out_f = out.ravel()
    unvisited = needs_fix.ravel().copy()

    # Level 1 in one full-grid sweep from every draining cell, then expand
    # frontier index arrays so deep flats cost work proportional to their size.
    drains = part & ~needs_fix
    reached = np.zeros(values.shape, dtype=bool)
    for code in range(1, 9):
        dr, dc = OFFSETS[code]
        rs = slice(max(0, -dr), h - max(0, dr))
        cs = slice(max(0, -dc), w - max(0, dc))
        rd = slice(max(0, dr), h + min(0, dr))
        cd = slice(max(0, dc), w + min(0, dc))
        reached[rd, cd] |= drains[rs, cs] & (values[rd, cd] == values[rs, cs])
    frontier = np.flatnonzero(reached.ravel() & unvisited)
    unvisited[frontier] = False
    out_f[frontier] = vf[frontier] + eps
    level = 1
    while frontier.size:
        level += 1
        rows_, cols_ = np.divmod(frontier, w)
        nxt = []
        for code in range(1, 9):
            dr, dc = OFFSETS[code]
            nr = rows_ + dr
            nc = cols_ + dc
            ok = (nr >= 0) & (nr < h) & (nc >= 0) & (nc < w)
            nbr = nr[ok] * w + nc[ok]
            src = frontier[ok]
            hit = nbr[unvisited[nbr] & (vf[nbr] == vf[src])]
            unvisited[hit] = False
            out_f[hit] = vf[hit] + level * eps
            nxt.append(hit)
        frontier = np.concatenate(nxt)
    if unvisited.any():
        r, c = divmod(int(np.flatnonzero(unvisited)[0]), w)
        raise RuntimeError(
            f"flat region with no draining cell at ({r}, {c}); pits were not filled"
        )
    return ElevationGrid(out, grid.cellsize, nodata, grid.xllcorner, grid.yllcorner)


def serial_accumulate(field: FlowField) -> AreaGrid:
    """Up-slope area by dependency-queue propagation over the whole DEM.

    Runs the distributed pipeline's counting and internal-accumulation
    kernels with a single strip covering every row, so A(c) = 1 + sum of
    A over the cells flowing into c.
    """
    dirs = field.dirs
    h, w = dirs.shape
    deps = np.zeros((h, w), dtype=np.int8)
    queue = np.empty(h * w, dtype=np.int64)
    n = kernels.count_dependencies(dirs, 0, h, deps, queue)
    areas = (dirs >= 0).astype(np.uint64)
    kernels.accumulate_internal(dirs, 0, h, deps, areas, queue, n)
    if np.any(deps[dirs >= 0] != 0):
        raise FlowCycleError("flow directions contain a cycle")
    return AreaGrid(areas)


def naive_accumulate(field: FlowField) -> AreaGrid:
    """Brute-force oracle: walk every cell's flow path and count visits.

    A(p) counts the cells (including p) whose forward path passes through p.
    Quadratic in path length; meant for grids up to roughly 16x16.
    """
    dirs = field.dirs
    h, w = dirs.shape
    limit = h * w
    areas = np.zeros((h, w), dtype=np.uint64)
    for r in range(h):
        for c in range(w):
            if dirs[r, c] < 0:
                continue
            cur = (r, c)
            for _ in range(limit + 1):
                areas[cur] += 1
                code = dirs[cur]
                if code <= 0:
                    break
                dr, dc = OFFSETS[code]
                cur = (cur[0] + dr, cur[1] + dc)
            else:
                raise FlowCycleError(f"path from ({r}, {c}) never reached an outlet")
    return AreaGrid(areas)


def esri_direction_codes(field: FlowField) -> np.ndarray:
    """Direction raster using ESRI D8 codes; outlet and nodata cells are 0."""
    codes = np.zeros(field.dirs.shape, dtype=np.uint64)
    for d in FlowDir:
        if d is FlowDir.OUTLET:
            continue
        codes[field.dirs == int(d)] = ESRI_CODES[d]
    return codes
