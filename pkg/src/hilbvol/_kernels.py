"""Numba shortest-path kernels with an indexed binary heap.

Both kernels are value-initialized: ``dist`` enters holding the initial
labels (``inf`` for unreached nodes) and is relaxed in place. With zeros on
a source set this is multi-source Dijkstra; with arbitrary finite labels it
computes ``min_y (init[y] + d(y, x))``, which is what the McShane extension
needs.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _sift_up(heap, pos, key, i):
    node = heap[i]
    k = key[node]
    while i > 0:
        parent = (i - 1) >> 1
        pn = heap[parent]
        if key[pn] < k or (key[pn] == k and pn < node):
            break
        heap[i] = pn
        pos[pn] = i
        i = parent
    heap[i] = node
    pos[node] = i


@njit(cache=True)
def _sift_down(heap, pos, key, i, size):
    node = heap[i]
    k = key[node]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        cn = heap[c]
        if c + 1 < size:
            rn = heap[c + 1]
            if key[rn] < key[cn] or (key[rn] == key[cn] and rn < cn):
                c += 1
                cn = rn
        if k < key[cn] or (k == key[cn] and node < cn):
            break
        heap[i] = cn
        pos[cn] = i
        i = c
    heap[i] = node
    pos[node] = i


@njit(cache=True)
def _push_or_decrease(heap, pos, key, node, size):
    if pos[node] < 0:
        heap[size] = node
        pos[node] = size
        _sift_up(heap, pos, key, size)
        return size + 1
    _sift_up(heap, pos, key, pos[node])
    return size


@njit(cache=True)
def _pop(heap, pos, key, size):
    top = heap[0]
    pos[top] = -2
    size -= 1
    if size > 0:
        heap[0] = heap[size]
        pos[heap[0]] = 0
        _sift_down(heap, pos, key, 0, size)
    return top, size


@njit(cache=True, nogil=True)
def csr_relax(dist, seeds, indptr, indices, weights):
    """Relax ``dist`` in place over a CSR graph with nonnegative weights.

    Only ``seeds`` start on the heap; every other finite label must already
    satisfy the edge inequalities (e.g. an exact field being updated).
    """
    n = dist.shape[0]
    heap = np.empty(n, np.int64)
    pos = np.full(n, -1, np.int64)
    size = 0
    for v in seeds:
        if dist[v] < np.inf and pos[v] < 0:
            size = _push_or_decrease(heap, pos, dist, v, size)
    while size > 0:
        u, size = _pop(heap, pos, dist, size)
        du = dist[u]
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if pos[v] == -2:
                continue
            nd = du + weights[e]
            if nd < dist[v]:
                dist[v] = nd
                size = _push_or_decrease(heap, pos, dist, v, size)
    return dist


@njit(cache=True, nogil=True)
def grid_relax(dist, seeds, active, phi, shape, offsets, lengths, periodic):
    """Relax ``dist`` in place on an implicit stencil grid.

    ``dist``, ``active`` and ``phi`` are flat arrays over a C-ordered grid of
    ``shape`` (three axes; unused trailing axes have extent 1). The edge for
    offset ``o`` joining ``a`` and ``b`` costs ``lengths[o] * (phi[a] + phi[b]) / 2``.
    ``periodic`` wraps all axes. Seeds behave as in ``csr_relax``.
    """
    nx, ny, nz = shape[0], shape[1], shape[2]
    n = nx * ny * nz
    heap = np.empty(n, np.int64)
    pos = np.full(n, -1, np.int64)
    size = 0
    for v in seeds:
        if active[v] and dist[v] < np.inf and pos[v] < 0:
            size = _push_or_decrease(heap, pos, dist, v, size)
    K = offsets.shape[0]
    while size > 0:
        u, size = _pop(heap, pos, dist, size)
        du = dist[u]
        pu = phi[u]
        ix = u // (ny * nz)
        rem = u - ix * ny * nz
        iy = rem // nz
        iz = rem - iy * nz
        for o in range(K):
            jx = ix + offsets[o, 0]
            jy = iy + offsets[o, 1]
            jz = iz + offsets[o, 2]
            if periodic:
                jx %= nx
                jy %= ny
                jz %= nz
            elif jx < 0 or jx >= nx or jy < 0 or jy >= ny or jz < 0 or jz >= nz:
                continue
            v = (jx * ny + jy) * nz + jz
            if not active[v] or pos[v] == -2:
                continue
            nd = du + lengths[o] * 0.5 * (pu + phi[v])
            if nd < dist[v]:
                dist[v] = nd
                size = _push_or_decrease(heap, pos, dist, v, size)
    return dist
