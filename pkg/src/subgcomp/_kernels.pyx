# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics match ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t

cnp.import_array()


def tensor_values(const double[:, :, ::1] copies, const cnp.intp_t[:, ::1] seqs):
    """values[r, s] = mean_i copies[r, i, seqs[s, i]]."""
    cdef Py_ssize_t R = copies.shape[0], M = copies.shape[1], S = seqs.shape[0]
    cdef Py_ssize_t r, s, i
    cdef double acc
    out = np.empty((R, S), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(R):
            for s in range(S):
                acc = 0.0
                for i in range(M):
                    acc += copies[r, i, seqs[s, i]]
                o[r, s] = acc / M
    return out


def tensor_sup(const double[:, :, ::1] copies, const cnp.intp_t[:, ::1] seqs):
    """sup[r] = max_s mean_i copies[r, i, seqs[s, i]]."""
    cdef Py_ssize_t R = copies.shape[0], M = copies.shape[1], S = seqs.shape[0]
    cdef Py_ssize_t r, s, i
    cdef double acc, best
    out = np.empty(R, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(R):
            best = -1e308
            for s in range(S):
                acc = 0.0
                for i in range(M):
                    acc += copies[r, i, seqs[s, i]]
                if acc > best:
                    best = acc
            o[r] = best / M
    return out


cdef int _popcount(uint64_t x) nogil:
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c


cdef int _lowest_bit(uint64_t x) nogil:
    cdef int b = 0
    while not (x & 1):
        x >>= 1
        b += 1
    return b


cdef void _search(const uint64_t[::1] masks, Py_ssize_t m, uint64_t uncovered,
                  int depth, int maxsize, int* best) nogil:
    cdef int e, need
    cdef Py_ssize_t c
    if uncovered == 0:
        if depth < best[0]:
            best[0] = depth
        return
    need = (_popcount(uncovered) + maxsize - 1) // maxsize
    if depth + need >= best[0]:
        return
    e = _lowest_bit(uncovered)
    for c in range(m):
        if (masks[c] >> e) & 1:
            _search(masks, m, uncovered & ~masks[c], depth + 1, maxsize, best)


def min_cover(const uint64_t[::1] masks, int n, int upper):
    """Size of a minimum cover of {0..n-1} by the given bitmasks."""
    cdef Py_ssize_t m = masks.shape[0], c
    cdef int maxsize = 1, best = upper + 1
    cdef uint64_t full = (<uint64_t>1 << n) - 1 if n < 64 else <uint64_t>0xFFFFFFFFFFFFFFFF
    for c in range(m):
        maxsize = max(maxsize, _popcount(masks[c]))
    with nogil:
        _search(masks, m, full, 0, maxsize, &best)
    return best
