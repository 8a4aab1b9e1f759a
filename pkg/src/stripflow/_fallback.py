"""Pure-Python (numpy) implementations of the hot grid kernels.

This lane is the import-time fallback when the compiled extension is
unavailable and the reference the compiled lane is tested against. Both
lanes must produce bit-identical outputs: they share scan orders, tie
breaking, and floating-point expressions (slope = drop * 1/dist with the
same constants).

All kernels work on the worker's local array. ``dirs`` uses the codes from
:mod:`stripflow.d8` (-1 nodata, 0 outlet, 1..8 directions); rows outside the
computed direction band must be -1. ``own_lo``/``own_hi`` bound the owned
rows; queue-driven kernels never write outside them.
"""

import heapq

import numpy as np

from .d8 import INV_DIST, NODATA_DIR, OFFSETS

# Reciprocal direction per code (N<->S, NE<->SW, E<->W, SE<->NW).
OPPOSITE = (0, 5, 6, 7, 8, 1, 2, 3, 4)


def flow_directions(elev, nodata, row_lo, row_hi, dirs_out):
    """Steepest-descent D8 directions for rows [row_lo, row_hi).

    Ties break on the first maximum in N, NE, E, SE, S, SW, W, NW order.
    Returns ``(n_flat, first_row, first_col)`` where ``n_flat`` counts cells
    that have an equal-elevation neighbor but no strictly lower one and no
    legitimate drain (grid border or nodata neighbor).
    """
    h, w = elev.shape
    n_band = row_hi - row_lo
    if n_band <= 0:
        return 0, -1, -1
    padded = np.full((h + 2, w + 2), nodata, dtype=np.float64)
    padded[1:-1, 1:-1] = elev
    center = elev[row_lo:row_hi]
    part = center != nodata

    slopes = np.full((8, n_band, w), -np.inf, dtype=np.float64)
    equal_any = np.zeros((n_band, w), dtype=bool)
    exempt = np.zeros((n_band, w), dtype=bool)  # border or nodata-adjacent
    for code in range(1, 9):
        dr, dc = OFFSETS[code]
        nb = padded[1 + row_lo + dr : 1 + row_hi + dr, 1 + dc : 1 + w + dc]
        nb_part = nb != nodata
        lower = nb_part & (nb < center)
        slopes[code - 1][lower] = ((center - nb) * INV_DIST[code])[lower]
        equal_any |= nb_part & (nb == center)
        exempt |= ~nb_part

    best = np.argmax(slopes, axis=0)
    has_drop = slopes[best, np.arange(n_band)[:, None], np.arange(w)[None, :]] > -np.inf
    band_dirs = np.zeros((n_band, w), dtype=np.int8)
    band_dirs[has_drop] = (best[has_drop] + 1).astype(np.int8)
    band_dirs[~part] = NODATA_DIR
    dirs_out[row_lo:row_hi] = band_dirs

    violation = part & ~has_drop & equal_any & ~exempt
    n_flat = int(violation.sum())
    if n_flat:
        r, c = np.argwhere(violation)[0]
        return n_flat, int(r) + row_lo, int(c)
    return 0, -1, -1


def fill_pits(elev, nodata):
    """Priority-flood fill from grid-border and nodata-adjacent cells.

    Every visited cell is raised to at least the spill elevation of the path
    it was reached by; popping in ascending (elevation, index) order makes
    that spill minimal, so the result is the unique minimal fill.
    """
    h, w = elev.shape
    filled = elev.copy()
    part = elev != nodata
    if not part.any():
        return filled

    padded = np.full((h + 2, w + 2), nodata, dtype=np.float64)
    padded[1:-1, 1:-1] = elev
    drains = np.zeros((h, w), dtype=bool)
    for code in range(1, 9):
        dr, dc = OFFSETS[code]
        drains |= padded[1 + dr : 1 + h + dr, 1 + dc : 1 + w + dc] == nodata
    seed_mask = part & drains

    flat = filled.ravel()
    visited = (~part).ravel().copy()
    heap = []
    for i in np.flatnonzero(seed_mask.ravel()):
        i = int(i)
        visited[i] = True
        heap.append((flat[i], i))
    heapq.heapify(heap)
    while heap:
        spill, i = heapq.heappop(heap)
        r, c = divmod(i, w)
        for code in range(1, 9):
            dr, dc = OFFSETS[code]
            nr, nc = r + dr, c + dc
            if nr < 0 or nr >= h or nc < 0 or nc >= w:
                continue
            j = nr * w + nc
            if visited[j]:
                continue
            visited[j] = True
            if flat[j] < spill:
                flat[j] = spill
            heapq.heappush(heap, (flat[j], j))
    return filled


def count_dependencies(dirs, own_lo, own_hi, deps, queue):
    """Count inflow neighbors per owned cell; queue cells with none.

    Contributors may sit anywhere in the local array (in practice the first
    halo row each side); targets are restricted to owned rows. The queue is
    filled with flat indices of participating zero-dependency owned cells in
    row-major order. Returns the queue length.
    """
    h, w = dirs.shape
    n_band = own_hi - own_lo
    cnt = np.zeros((n_band, w), dtype=np.int16)
    for code in range(1, 9):
        dr, dc = OFFSETS[code]
        r0 = max(own_lo - dr, 0)
        r1 = min(own_hi - dr, h)
        if r0 >= r1:
            continue
        c0 = max(-dc, 0)
        c1 = min(w - dc, w)
        block = dirs[r0:r1, c0:c1] == code
        cnt[r0 + dr - own_lo : r1 + dr - own_lo, c0 + dc : c1 + dc] += block
    deps[own_lo:own_hi] = cnt.astype(np.int8)
    ready = (cnt == 0) & (dirs[own_lo:own_hi] >= 0)
    idx = np.flatnonzero(ready.ravel()) + own_lo * w
    queue[: idx.size] = idx
    return int(idx.size)


def _steps(w):
    return [0] + [dr * w + dc for dr, dc in OFFSETS[1:]]


def accumulate_internal(dirs, own_lo, own_hi, deps, areas, queue, n_queue):
    """Drain the queue, chasing each flow path depth-first within owned rows.

    A cell's area is propagated to its downslope target the moment the cell
    is final; the target is processed once its own dependency count reaches
    zero. Cells blocked on halo inflows keep a positive count and stay put.
    """
    h, w = dirs.shape
    steps = _steps(w)
    dirs_f = dirs.ravel()
    deps_f = deps.ravel()
    areas_f = areas.ravel()
    lo, hi = own_lo * w, own_hi * w
    for qi in range(n_queue):
        c = int(queue[qi])
        while True:
            d = dirs_f[c]
            if d <= 0:
                break
            t = c + steps[d]
            if not lo <= t < hi:
                break
            areas_f[t] += areas_f[c]
            deps_f[t] -= 1
            if deps_f[t] != 0:
                break
            c = t


def _inflows(dirs_f, c, h, w):
    r, col = divmod(c, w)
    found = []
    for code in range(1, 9):
        dr, dc = OFFSETS[code]
        nr, nc = r + dr, col + dc
        if nr < 0 or nr >= h or nc < 0 or nc >= w:
            continue
        n = nr * w + nc
        if dirs_f[n] == OPPOSITE[code]:
            found.append(n)
    return found


def external_upslope(dirs, own_lo, own_hi, deps, areas, seeds, n_seeds,
                     path_vars, org_head, org_tail, org_next):
    """Walk the remaining flow paths symbolically (owned rows only).

    Each seed cell carries a pre-assigned path variable whose origin list
    starts as the cell itself (entry ``i`` of the ``org_*`` linked lists
    belongs to variable ``i``). Marks encountered along a path (abandoned
    paths on inflow cells, pending receivers on the cell itself) are merged
    into the running variable by origin-list concatenation; a path parks its
    variable on the cell where it stops.
    """
    h, w = dirs.shape
    steps = _steps(w)
    dirs_f = dirs.ravel()
    deps_f = deps.ravel()
    areas_f = areas.ravel()
    vars_f = path_vars.ravel()
    lo, hi = own_lo * w, own_hi * w
    for qi in range(n_seeds):
        c = int(seeds[qi])
        v = int(vars_f[c])
        vars_f[c] = -1
        while True:
            inflows = _inflows(dirs_f, c, h, w)
            total = 1
            for n in inflows:
                total += int(areas_f[n])
            areas_f[c] = total
            for n in inflows + [c]:
                other = int(vars_f[n])
                if other >= 0:
                    org_next[org_tail[v]] = org_head[other]
                    org_tail[v] = org_tail[other]
                    vars_f[n] = -1
            d = dirs_f[c]
            if d > 0:
                t = c + steps[d]
                if lo <= t < hi:
                    deps_f[t] -= 1
                    if deps_f[t] == 0:
                        c = t
                        continue
            vars_f[c] = v
            break


def finalise_internal(dirs, own_lo, own_hi, deps, areas, seeds, n_seeds, deferred):
    """Propagate incoming border areas down the same paths as the symbolic walk.

    The running sum starts from the popped cell's stored incoming, absorbs
    stored sums of merging inflow paths and of cells with pending incoming
    (erasing them), and is added to every cell visited. A path that stops at
    an unsatisfied cell parks its sum there for later absorption.
    """
    h, w = dirs.shape
    steps = _steps(w)
    dirs_f = dirs.ravel()
    deps_f = deps.ravel()
    areas_f = areas.ravel()
    def_f = deferred.ravel()
    lo, hi = own_lo * w, own_hi * w
    for qi in range(n_seeds):
        c = int(seeds[qi])
        s = 0
        while True:
            for n in _inflows(dirs_f, c, h, w) + [c]:
                s += int(def_f[n])
                def_f[n] = 0
            areas_f[c] += s
            d = dirs_f[c]
            if d > 0:
                t = c + steps[d]
                if lo <= t < hi:
                    deps_f[t] -= 1
                    if deps_f[t] == 0:
                        c = t
                        continue
            def_f[c] = s
            break
