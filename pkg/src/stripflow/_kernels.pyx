# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot grid kernels.

Must stay observably identical to stripflow._fallback: same scan orders, the
same tie breaking, and the same floating-point expressions. The heavy loops
release the GIL so worker threads overlap for real.
"""

import numpy as np

cimport cython
from libc.math cimport INFINITY, sqrt


cdef double INV_SQRT2 = 1.0 / sqrt(2.0)

# Neighbor offsets in tie-break scan order N, NE, E, SE, S, SW, W, NW.
cdef int[8] DR
cdef int[8] DC
DR[0] = -1; DR[1] = -1; DR[2] = 0; DR[3] = 1
DR[4] = 1;  DR[5] = 1;  DR[6] = 0; DR[7] = -1
DC[0] = 0;  DC[1] = 1;  DC[2] = 1; DC[3] = 1
DC[4] = 0;  DC[5] = -1; DC[6] = -1; DC[7] = -1

cdef double[9] INVD
INVD[0] = 0.0
INVD[1] = 1.0; INVD[2] = INV_SQRT2; INVD[3] = 1.0; INVD[4] = INV_SQRT2
INVD[5] = 1.0; INVD[6] = INV_SQRT2; INVD[7] = 1.0; INVD[8] = INV_SQRT2

# Reciprocal direction code per code (N<->S, NE<->SW, E<->W, SE<->NW).
cdef int[9] OPP
OPP[0] = 0
OPP[1] = 5; OPP[2] = 6; OPP[3] = 7; OPP[4] = 8
OPP[5] = 1; OPP[6] = 2; OPP[7] = 3; OPP[8] = 4


def flow_directions(double[:, ::1] elev, double nodata,
                    Py_ssize_t row_lo, Py_ssize_t row_hi,
                    signed char[:, ::1] dirs_out):
    """See stripflow._fallback.flow_directions."""
    cdef Py_ssize_t h = elev.shape[0], w = elev.shape[1]
    cdef Py_ssize_t r, c, k, nr, nc
    cdef double e, ne, slope, best
    cdef int best_code
    cdef bint equal_any, exempt
    cdef long long n_flat = 0
    cdef Py_ssize_t first_r = -1, first_c = -1
    if row_hi <= row_lo:
        return 0, -1, -1
    with nogil:
        for r in range(row_lo, row_hi):
            for c in range(w):
                e = elev[r, c]
                if e == nodata:
                    dirs_out[r, c] = -1
                    continue
                best = -INFINITY
                best_code = 0
                equal_any = False
                exempt = False
                for k in range(8):
                    nr = r + DR[k]
                    nc = c + DC[k]
                    if nr < 0 or nr >= h or nc < 0 or nc >= w:
                        exempt = True
                        continue
                    ne = elev[nr, nc]
                    if ne == nodata:
                        exempt = True
                        continue
                    if ne < e:
                        slope = (e - ne) * INVD[k + 1]
                        if slope > best:
                            best = slope
                            best_code = k + 1
                    elif ne == e:
                        equal_any = True
                dirs_out[r, c] = <signed char> best_code
                if best_code == 0 and equal_any and not exempt:
                    if n_flat == 0:
                        first_r = r
                        first_c = c
                    n_flat += 1
    return int(n_flat), int(first_r), int(first_c)


cdef inline bint _heap_less(double av, long long ai, double bv, long long bi) nogil:
    return av < bv or (av == bv and ai < bi)


cdef inline void _heap_push(double* hv, long long* hi, Py_ssize_t* size,
                            double v, long long i) nogil:
    cdef Py_ssize_t pos = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while pos > 0:
        parent = (pos - 1) >> 1
        if _heap_less(v, i, hv[parent], hi[parent]):
            hv[pos] = hv[parent]
            hi[pos] = hi[parent]
            pos = parent
        else:
            break
    hv[pos] = v
    hi[pos] = i


cdef inline void _heap_pop(double* hv, long long* hi, Py_ssize_t* size,
                           double* out_v, long long* out_i) nogil:
    out_v[0] = hv[0]
    out_i[0] = hi[0]
    size[0] -= 1
    cdef double v = hv[size[0]]
    cdef long long i = hi[size[0]]
    cdef Py_ssize_t pos = 0, child
    while True:
        child = 2 * pos + 1
        if child >= size[0]:
            break
        if child + 1 < size[0] and _heap_less(hv[child + 1], hi[child + 1], hv[child], hi[child]):
            child += 1
        if _heap_less(hv[child], hi[child], v, i):
            hv[pos] = hv[child]
            hi[pos] = hi[child]
            pos = child
        else:
            break
    hv[pos] = v
    hi[pos] = i


def fill_pits(elev_in, double nodata):
    """See stripflow._fallback.fill_pits."""
    filled_arr = np.array(elev_in, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] filled = filled_arr
    cdef Py_ssize_t h = filled.shape[0], w = filled.shape[1], n = h * w
    visited_arr = np.zeros(n, dtype=np.uint8)
    heap_v_arr = np.empty(n, dtype=np.float64)
    heap_i_arr = np.empty(n, dtype=np.int64)
    cdef unsigned char[::1] visited = visited_arr
    cdef double[::1] heap_v = heap_v_arr
    cdef long long[::1] heap_i = heap_i_arr
    cdef Py_ssize_t heap_size = 0
    cdef Py_ssize_t r, c, k, nr, nc, j
    cdef long long i, popped_i
    cdef double e, spill
    cdef bint edge
    cdef bint any_part = False
    with nogil:
        for r in range(h):
            for c in range(w):
                e = filled[r, c]
                if e == nodata:
                    visited[r * w + c] = 1
                    continue
                any_part = True
                edge = False
                for k in range(8):
                    nr = r + DR[k]
                    nc = c + DC[k]
                    if nr < 0 or nr >= h or nc < 0 or nc >= w or filled[nr, nc] == nodata:
                        edge = True
                        break
                if edge:
                    visited[r * w + c] = 1
                    _heap_push(&heap_v[0], &heap_i[0], &heap_size, e, r * w + c)
        while heap_size > 0:
            _heap_pop(&heap_v[0], &heap_i[0], &heap_size, &spill, &popped_i)
            r = popped_i / w
            c = popped_i - r * w
            for k in range(8):
                nr = r + DR[k]
                nc = c + DC[k]
                if nr < 0 or nr >= h or nc < 0 or nc >= w:
                    continue
                j = nr * w + nc
                if visited[j]:
                    continue
                visited[j] = 1
                if filled[nr, nc] < spill:
                    filled[nr, nc] = spill
                _heap_push(&heap_v[0], &heap_i[0], &heap_size, filled[nr, nc], j)
    return filled_arr


def count_dependencies(signed char[:, ::1] dirs, Py_ssize_t own_lo, Py_ssize_t own_hi,
                       signed char[:, ::1] deps, long long[::1] queue):
    """See stripflow._fallback.count_dependencies."""
    cdef Py_ssize_t h = dirs.shape[0], w = dirs.shape[1]
    cdef Py_ssize_t r, c, k, nr, nc
    cdef int cnt
    cdef Py_ssize_t n = 0
    with nogil:
        for r in range(own_lo, own_hi):
            for c in range(w):
                if dirs[r, c] < 0:
                    deps[r, c] = 0
                    continue
                cnt = 0
                for k in range(8):
                    nr = r + DR[k]
                    nc = c + DC[k]
                    if nr < 0 or nr >= h or nc < 0 or nc >= w:
                        continue
                    if dirs[nr, nc] == OPP[k + 1]:
                        cnt += 1
                deps[r, c] = <signed char> cnt
                if cnt == 0:
                    queue[n] = r * w + c
                    n += 1
    return int(n)


def accumulate_internal(signed char[:, ::1] dirs, Py_ssize_t own_lo, Py_ssize_t own_hi,
                        signed char[:, ::1] deps, unsigned long long[:, ::1] areas,
                        long long[::1] queue, Py_ssize_t n_queue):
    """See stripflow._fallback.accumulate_internal."""
    cdef Py_ssize_t w = dirs.shape[1]
    cdef signed char* pd = &dirs[0, 0]
    cdef signed char* pq = &deps[0, 0]
    cdef unsigned long long* pa = &areas[0, 0]
    cdef long long[9] steps
    cdef Py_ssize_t k, qi
    cdef long long c, t, lo = own_lo * w, hi = own_hi * w
    cdef int d
    steps[0] = 0
    for k in range(8):
        steps[k + 1] = DR[k] * w + DC[k]
    with nogil:
        for qi in range(n_queue):
            c = queue[qi]
            while True:
                d = pd[c]
                if d <= 0:
                    break
                t = c + steps[d]
                if t < lo or t >= hi:
                    break
                pa[t] += pa[c]
                pq[t] -= 1
                if pq[t] != 0:
                    break
                c = t


def external_upslope(signed char[:, ::1] dirs, Py_ssize_t own_lo, Py_ssize_t own_hi,
                     signed char[:, ::1] deps, unsigned long long[:, ::1] areas,
                     long long[::1] seeds, Py_ssize_t n_seeds,
                     long long[:, ::1] path_vars,
                     long long[::1] org_head, long long[::1] org_tail,
                     long long[::1] org_next):
    """See stripflow._fallback.external_upslope."""
    cdef Py_ssize_t h = dirs.shape[0], w = dirs.shape[1]
    cdef signed char* pd = &dirs[0, 0]
    cdef signed char* pq = &deps[0, 0]
    cdef unsigned long long* pa = &areas[0, 0]
    cdef long long* pv = &path_vars[0, 0]
    cdef long long[9] steps
    cdef Py_ssize_t k, qi
    cdef long long c, t, n, v, other, lo = own_lo * w, hi = own_hi * w
    cdef long long r, col, nr, nc
    cdef unsigned long long total
    cdef int d
    steps[0] = 0
    for k in range(8):
        steps[k + 1] = DR[k] * w + DC[k]
    with nogil:
        for qi in range(n_seeds):
            c = seeds[qi]
            v = pv[c]
            pv[c] = -1
            while True:
                r = c / w
                col = c - r * w
                total = 1
                for k in range(8):
                    nr = r + DR[k]
                    nc = col + DC[k]
                    if nr < 0 or nr >= h or nc < 0 or nc >= w:
                        continue
                    n = nr * w + nc
                    if pd[n] == OPP[k + 1]:
                        total += pa[n]
                pa[c] = total
                for k in range(8):
                    nr = r + DR[k]
                    nc = col + DC[k]
                    if nr < 0 or nr >= h or nc < 0 or nc >= w:
                        continue
                    n = nr * w + nc
                    if pd[n] == OPP[k + 1] and pv[n] >= 0:
                        other = pv[n]
                        org_next[org_tail[v]] = org_head[other]
                        org_tail[v] = org_tail[other]
                        pv[n] = -1
                if pv[c] >= 0:
                    other = pv[c]
                    org_next[org_tail[v]] = org_head[other]
                    org_tail[v] = org_tail[other]
                    pv[c] = -1
                d = pd[c]
                if d > 0:
                    t = c + steps[d]
                    if lo <= t < hi:
                        pq[t] -= 1
                        if pq[t] == 0:
                            c = t
                            continue
                pv[c] = v
                break


def finalise_internal(signed char[:, ::1] dirs, Py_ssize_t own_lo, Py_ssize_t own_hi,
                      signed char[:, ::1] deps, unsigned long long[:, ::1] areas,
                      long long[::1] seeds, Py_ssize_t n_seeds,
                      unsigned long long[:, ::1] deferred):
    """See stripflow._fallback.finalise_internal."""
    cdef Py_ssize_t h = dirs.shape[0], w = dirs.shape[1]
    cdef signed char* pd = &dirs[0, 0]
    cdef signed char* pq = &deps[0, 0]
    cdef unsigned long long* pa = &areas[0, 0]
    cdef unsigned long long* px = &deferred[0, 0]
    cdef long long[9] steps
    cdef Py_ssize_t k, qi
    cdef long long c, t, n, lo = own_lo * w, hi = own_hi * w
    cdef long long r, col, nr, nc
    cdef unsigned long long s
    cdef int d
    steps[0] = 0
    for k in range(8):
        steps[k + 1] = DR[k] * w + DC[k]
    with nogil:
        for qi in range(n_seeds):
            c = seeds[qi]
            s = 0
            while True:
                r = c / w
                col = c - r * w
                for k in range(8):
                    nr = r + DR[k]
                    nc = col + DC[k]
                    if nr < 0 or nr >= h or nc < 0 or nc >= w:
                        continue
                    n = nr * w + nc
                    if pd[n] == OPP[k + 1]:
                        s += px[n]
                        px[n] = 0
                s += px[c]
                px[c] = 0
                pa[c] += s
                d = pd[c]
                if d > 0:
                    t = c + steps[d]
                    if lo <= t < hi:
                        pq[t] -= 1
                        if pq[t] == 0:
                            c = t
                            continue
                px[c] = s
                break
