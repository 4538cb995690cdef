# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled popcount kernels for packed binary codes."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef unsigned char[256] POPCOUNT_TABLE

cdef void _init_table() noexcept:
    cdef int i, v, c
    for i in range(256):
        v = i
        c = 0
        while v:
            v &= v - 1
            c += 1
        POPCOUNT_TABLE[i] = c

_init_table()


def packed_distances(const unsigned char[::1] query, const unsigned char[:, ::1] database):
    """Hamming distances between one packed code and every packed database row."""
    cdef Py_ssize_t n = database.shape[0]
    cdef Py_ssize_t width = database.shape[1]
    if query.shape[0] != width:
        raise ValueError("query width does not match database width")
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] out_view = out
    cdef Py_ssize_t i, j
    cdef long long acc
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(width):
                acc += POPCOUNT_TABLE[query[j] ^ database[i, j]]
            out_view[i] = acc
    return out


def pairwise_distances(const unsigned char[:, ::1] a, const unsigned char[:, ::1] b):
    """Full Hamming distance matrix between two packed code sets."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t width = a.shape[1]
    if b.shape[1] != width:
        raise ValueError("packed widths differ")
    out = np.empty((n, m), dtype=np.int64)
    cdef long long[:, ::1] out_view = out
    cdef Py_ssize_t i, j, k
    cdef long long acc
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0
                for k in range(width):
                    acc += POPCOUNT_TABLE[a[i, k] ^ b[j, k]]
                out_view[i, j] = acc
    return out
