# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte-Carlo kernels: QAM hard slicing and bit-error counting."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline long long _axis_index(double v, double inv_step, long long levels) nogil:
    cdef double j = floor((v * inv_step + (levels - 1)) * 0.5 + 0.5)
    if j < 0:
        return 0
    if j > levels - 1:
        return levels - 1
    return <long long> j


cdef inline int _popcount(long long x) nogil:
    cdef int c = 0
    cdef unsigned long long u = <unsigned long long> x
    while u:
        u &= u - 1
        c += 1
    return c


def slice_labels(y, double inv_step, long long n_i, long long n_q, int bits_q):
    cdef const double complex[::1] yv = np.ascontiguousarray(y, dtype=np.complex128).ravel()
    cdef Py_ssize_t n = yv.shape[0], t
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] ov = out
    cdef long long ji, jq
    with nogil:
        for t in range(n):
            ji = _axis_index(yv[t].real, inv_step, n_i)
            jq = _axis_index(yv[t].imag, inv_step, n_q)
            ov[t] = ((ji ^ (ji >> 1)) << bits_q) | (jq ^ (jq >> 1))
    return out.reshape(np.shape(y))


def count_bit_errors(a, b):
    cdef const long long[::1] av = np.ascontiguousarray(a, dtype=np.int64).ravel()
    cdef const long long[::1] bv = np.ascontiguousarray(b, dtype=np.int64).ravel()
    if av.shape[0] != bv.shape[0]:
        raise ValueError("label arrays differ in length")
    cdef Py_ssize_t t
    cdef long long total = 0
    with nogil:
        for t in range(av.shape[0]):
            total += _popcount(av[t] ^ bv[t])
    return int(total)


def slice_count_errors(y, tx_labels, double inv_step, long long n_i, long long n_q, int bits_q):
    cdef const double complex[::1] yv = np.ascontiguousarray(y, dtype=np.complex128).ravel()
    cdef const long long[::1] tv = np.ascontiguousarray(tx_labels, dtype=np.int64).ravel()
    if yv.shape[0] != tv.shape[0]:
        raise ValueError("sample and label arrays differ in length")
    cdef Py_ssize_t t
    cdef long long ji, jq, lab, total = 0
    with nogil:
        for t in range(yv.shape[0]):
            ji = _axis_index(yv[t].real, inv_step, n_i)
            jq = _axis_index(yv[t].imag, inv_step, n_q)
            lab = ((ji ^ (ji >> 1)) << bits_q) | (jq ^ (jq >> 1))
            total += _popcount(lab ^ tv[t])
    return int(total)
