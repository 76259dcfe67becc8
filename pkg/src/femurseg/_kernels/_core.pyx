# cython: language_level=3
"""Compiled kernels for the hot inner loops.

Must stay bit-identical to ``pure.py``: same scan order, neighbor order,
tie-breaking and accumulation order.  The parity test suite compares both
implementations on random inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()

IMPLEMENTATION = "compiled"

cdef int CHAMFER_ORTH = 3
cdef int CHAMFER_DIAG = 4
cdef long long CHAMFER_INF = 1 << 30


cdef inline long long _find(long long* parent, long long i) noexcept nogil:
    cdef long long root = i
    cdef long long nxt
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


def label_components(cnp.ndarray mask_arr, int connectivity=8):
    """Union-find labeling; labels 1..K in raster order of first pixel."""
    cdef cnp.uint8_t[:, :] fg = np.ascontiguousarray(mask_arr != 0).view(np.uint8)
    cdef int h = fg.shape[0]
    cdef int w = fg.shape[1]
    cdef cnp.ndarray raw_arr = np.zeros((h, w), dtype=np.int64)
    cdef long long[:, :] raw = raw_arr
    cdef long long* parent = <long long*> malloc(sizeof(long long) * (h * w + 1))
    if parent == NULL:
        raise MemoryError()
    cdef long long nparent = 0
    cdef int y, x, k, ny, nx
    cdef long long best, r, lo, hi
    cdef int nprev
    cdef int pdy[4]
    cdef int pdx[4]
    if connectivity == 4:
        nprev = 2
        pdy[0] = -1; pdx[0] = 0
        pdy[1] = 0; pdx[1] = -1
    else:
        nprev = 4
        pdy[0] = -1; pdx[0] = -1
        pdy[1] = -1; pdx[1] = 0
        pdy[2] = -1; pdx[2] = 1
        pdy[3] = 0; pdx[3] = -1

    try:
        for y in range(h):
            for x in range(w):
                if fg[y, x] == 0:
                    continue
                best = -1
                for k in range(nprev):
                    ny = y + pdy[k]
                    nx = x + pdx[k]
                    if 0 <= ny < h and 0 <= nx < w and raw[ny, nx] != 0:
                        r = _find(parent, raw[ny, nx] - 1)
                        if best == -1:
                            best = r
                        elif r != best:
                            if best < r:
                                lo = best; hi = r
                            else:
                                lo = r; hi = best
                            parent[hi] = lo
                            best = lo
                if best == -1:
                    best = nparent
                    parent[nparent] = nparent
                    nparent += 1
                raw[y, x] = best + 1

        labels_arr = np.zeros((h, w), dtype=np.int32)
        remap_arr = np.zeros(nparent + 1, dtype=np.int64)
        cdef_relabel(raw, labels_arr, remap_arr, parent, h, w)
        return labels_arr, int(labels_arr.max()) if h * w else 0
    finally:
        free(parent)


cdef void cdef_relabel(long long[:, :] raw, cnp.ndarray labels_arr,
                       cnp.ndarray remap_arr, long long* parent,
                       int h, int w):
    cdef cnp.int32_t[:, :] labels = labels_arr
    cdef long long[:] remap = remap_arr
    cdef long long nextlabel = 1
    cdef long long root
    cdef int y, x
    for y in range(h):
        for x in range(w):
            if raw[y, x] != 0:
                root = _find(parent, raw[y, x] - 1)
                if remap[root] == 0:
                    remap[root] = nextlabel
                    nextlabel += 1
                labels[y, x] = <cnp.int32_t> remap[root]


# --- binary min-heap on (priority, insertion counter) ---

cdef struct HeapEntry:
    double p
    long long c
    int y
    int x

cdef struct Heap:
    HeapEntry* data
    long long size
    long long cap

cdef inline bint _heap_lt(HeapEntry a, HeapEntry b) noexcept nogil:
    if a.p != b.p:
        return a.p < b.p
    return a.c < b.c

cdef int _heap_push(Heap* hp, double p, long long c, int y, int x) except -1:
    cdef HeapEntry e
    cdef long long i, par
    if hp.size == hp.cap:
        hp.cap *= 2
        hp.data = <HeapEntry*> realloc_entries(hp.data, hp.cap)
    e.p = p; e.c = c; e.y = y; e.x = x
    i = hp.size
    hp.size += 1
    while i > 0:
        par = (i - 1) >> 1
        if _heap_lt(e, hp.data[par]):
            hp.data[i] = hp.data[par]
            i = par
        else:
            break
    hp.data[i] = e
    return 0

cdef HeapEntry* realloc_entries(HeapEntry* data, long long cap) except NULL:
    cdef HeapEntry* nd = <HeapEntry*> malloc(sizeof(HeapEntry) * cap)
    if nd == NULL:
        raise MemoryError()
    # caller guarantees old size == cap // 2
    cdef long long i
    for i in range(cap // 2):
        nd[i] = data[i]
    free(data)
    return nd

cdef HeapEntry _heap_pop(Heap* hp) noexcept nogil:
    cdef HeapEntry top = hp.data[0]
    cdef HeapEntry last = hp.data[hp.size - 1]
    hp.size -= 1
    cdef long long i = 0, child
    while True:
        child = 2 * i + 1
        if child >= hp.size:
            break
        if child + 1 < hp.size and _heap_lt(hp.data[child + 1], hp.data[child]):
            child += 1
        if _heap_lt(hp.data[child], last):
            hp.data[i] = hp.data[child]
            i = child
        else:
            break
    hp.data[i] = last
    return top


def watershed_flood(cnp.ndarray relief_arr, cnp.ndarray markers_arr,
                    int connectivity=4):
    """Meyer priority flooding; FIFO at equal relief; 0 = watershed line."""
    cdef cnp.float32_t[:, :] relief = np.ascontiguousarray(relief_arr, dtype=np.float32)
    out_arr = np.ascontiguousarray(markers_arr, dtype=np.int64).copy()
    cdef long long[:, :] out = out_arr
    cdef int h = relief.shape[0]
    cdef int w = relief.shape[1]
    cdef int ndirs
    cdef int dys[8]
    cdef int dxs[8]
    _fill_dirs(connectivity, dys, dxs, &ndirs)

    cdef Heap hp
    hp.cap = 1024
    hp.size = 0
    hp.data = <HeapEntry*> malloc(sizeof(HeapEntry) * hp.cap)
    if hp.data == NULL:
        raise MemoryError()
    cdef long long counter = 0
    cdef int y, x, k, ny, nx
    cdef long long label
    cdef bint is_line
    cdef HeapEntry e
    cdef long long LINE = -1
    try:
        for y in range(h):
            for x in range(w):
                if out[y, x] > 0:
                    for k in range(ndirs):
                        ny = y + dys[k]
                        nx = x + dxs[k]
                        if 0 <= ny < h and 0 <= nx < w and out[ny, nx] == 0:
                            _heap_push(&hp, <double> relief[ny, nx], counter, ny, nx)
                            counter += 1
        while hp.size > 0:
            e = _heap_pop(&hp)
            y = e.y
            x = e.x
            if out[y, x] != 0:
                continue
            label = 0
            is_line = False
            for k in range(ndirs):
                ny = y + dys[k]
                nx = x + dxs[k]
                if 0 <= ny < h and 0 <= nx < w and out[ny, nx] > 0:
                    if label == 0:
                        label = out[ny, nx]
                    elif out[ny, nx] != label:
                        is_line = True
            if is_line or label == 0:
                out[y, x] = LINE
            else:
                out[y, x] = label
            for k in range(ndirs):
                ny = y + dys[k]
                nx = x + dxs[k]
                if 0 <= ny < h and 0 <= nx < w and out[ny, nx] == 0:
                    _heap_push(&hp, <double> relief[ny, nx], counter, ny, nx)
                    counter += 1
    finally:
        free(hp.data)
    out_arr[out_arr == LINE] = 0
    return out_arr.astype(np.int32)


cdef void _fill_dirs(int connectivity, int* dys, int* dxs, int* ndirs) noexcept nogil:
    if connectivity == 4:
        ndirs[0] = 4
        dys[0] = -1; dxs[0] = 0
        dys[1] = 0; dxs[1] = -1
        dys[2] = 0; dxs[2] = 1
        dys[3] = 1; dxs[3] = 0
    else:
        ndirs[0] = 8
        dys[0] = -1; dxs[0] = -1
        dys[1] = -1; dxs[1] = 0
        dys[2] = -1; dxs[2] = 1
        dys[3] = 0; dxs[3] = -1
        dys[4] = 0; dxs[4] = 1
        dys[5] = 1; dxs[5] = -1
        dys[6] = 1; dxs[6] = 0
        dys[7] = 1; dxs[7] = 1


def flood_fill_mask(cnp.ndarray data_arr, int seed_y, int seed_x, double tol):
    """4-connected region of pixels within tol of the seed's value."""
    cdef cnp.float64_t[:, :] data = np.ascontiguousarray(data_arr, dtype=np.float64)
    cdef int h = data.shape[0]
    cdef int w = data.shape[1]
    mask_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] mask = mask_arr
    cdef double seed_val = data[seed_y, seed_x]
    cdef int* qy = <int*> malloc(sizeof(int) * h * w)
    cdef int* qx = <int*> malloc(sizeof(int) * h * w)
    if qy == NULL or qx == NULL:
        free(qy); free(qx)
        raise MemoryError()
    cdef long long head = 0, tail = 0
    cdef int y, x, k, ny, nx
    cdef int dys[4]
    cdef int dxs[4]
    dys[0] = -1; dxs[0] = 0
    dys[1] = 0; dxs[1] = -1
    dys[2] = 0; dxs[2] = 1
    dys[3] = 1; dxs[3] = 0
    mask[seed_y, seed_x] = 1
    qy[tail] = seed_y; qx[tail] = seed_x; tail += 1
    with nogil:
        while head < tail:
            y = qy[head]; x = qx[head]; head += 1
            for k in range(4):
                ny = y + dys[k]
                nx = x + dxs[k]
                if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] == 0:
                    if data[ny, nx] - seed_val <= tol and seed_val - data[ny, nx] <= tol:
                        mask[ny, nx] = 1
                        qy[tail] = ny; qx[tail] = nx; tail += 1
    free(qy)
    free(qx)
    return mask_arr


def chamfer_distance(cnp.ndarray mask_arr):
    """3-4 chamfer distance (scaled by 1/3) of foreground to background."""
    cdef cnp.uint8_t[:, :] fg = np.ascontiguousarray(mask_arr != 0).view(np.uint8)
    cdef int h = fg.shape[0]
    cdef int w = fg.shape[1]
    d_arr = np.where(np.asarray(fg) != 0, CHAMFER_INF, 0).astype(np.int64)
    cdef long long[:, :] d = d_arr
    cdef int y, x
    cdef long long best
    with nogil:
        for y in range(h):
            for x in range(w):
                if d[y, x] == 0:
                    continue
                best = d[y, x]
                if y > 0:
                    if best > d[y - 1, x] + CHAMFER_ORTH:
                        best = d[y - 1, x] + CHAMFER_ORTH
                    if x > 0 and best > d[y - 1, x - 1] + CHAMFER_DIAG:
                        best = d[y - 1, x - 1] + CHAMFER_DIAG
                    if x < w - 1 and best > d[y - 1, x + 1] + CHAMFER_DIAG:
                        best = d[y - 1, x + 1] + CHAMFER_DIAG
                if x > 0 and best > d[y, x - 1] + CHAMFER_ORTH:
                    best = d[y, x - 1] + CHAMFER_ORTH
                d[y, x] = best
        for y in range(h - 1, -1, -1):
            for x in range(w - 1, -1, -1):
                if d[y, x] == 0:
                    continue
                best = d[y, x]
                if y < h - 1:
                    if best > d[y + 1, x] + CHAMFER_ORTH:
                        best = d[y + 1, x] + CHAMFER_ORTH
                    if x > 0 and best > d[y + 1, x - 1] + CHAMFER_DIAG:
                        best = d[y + 1, x - 1] + CHAMFER_DIAG
                    if x < w - 1 and best > d[y + 1, x + 1] + CHAMFER_DIAG:
                        best = d[y + 1, x + 1] + CHAMFER_DIAG
                if x < w - 1 and best > d[y, x + 1] + CHAMFER_ORTH:
                    best = d[y, x + 1] + CHAMFER_ORTH
                d[y, x] = best
    return (d_arr.astype(np.float32)) / np.float32(3.0)


def mean_shift(cnp.ndarray img_arr, int spatial_radius, double range_radius,
               int max_iter):
    """Joint spatial-range mode seeking per pixel, flat kernel."""
    cdef cnp.float64_t[:, :] data = np.ascontiguousarray(img_arr, dtype=np.float64)
    cdef int h = data.shape[0]
    cdef int w = data.shape[1]
    out_arr = np.empty((h, w), dtype=np.float32)
    cdef cnp.float32_t[:, :] out = out_arr
    cdef double rs2 = <double>(spatial_radius * spatial_radius)
    cdef double rr = range_radius
    cdef int py, px, it, y0, y1, x0, x1, qy, qx
    cdef long long n
    cdef double cy, cx, v, sy, sx, sv, dy, dx, q, nv, shift
    with nogil:
        for py in range(h):
            for px in range(w):
                cy = py; cx = px; v = data[py, px]
                for it in range(max_iter):
                    y0 = <int>(cy - spatial_radius)
                    if y0 < 0: y0 = 0
                    y1 = <int>(cy + spatial_radius)
                    if y1 > h - 1: y1 = h - 1
                    x0 = <int>(cx - spatial_radius)
                    if x0 < 0: x0 = 0
                    x1 = <int>(cx + spatial_radius)
                    if x1 > w - 1: x1 = w - 1
                    sy = 0.0; sx = 0.0; sv = 0.0
                    n = 0
                    for qy in range(y0, y1 + 1):
                        for qx in range(x0, x1 + 1):
                            dy = qy - cy
                            dx = qx - cx
                            if dy * dy + dx * dx > rs2:
                                continue
                            q = data[qy, qx]
                            if q - v > rr or v - q > rr:
                                continue
                            sy += qy
                            sx += qx
                            sv += q
                            n += 1
                    if n == 0:
                        break
                    nv = sv / n
                    shift = nv - v
                    if shift < 0:
                        shift = -shift
                    cy = sy / n
                    cx = sx / n
                    v = nv
                    if shift < 0.5:
                        break
                out[py, px] = <cnp.float32_t> v
    return out_arr
