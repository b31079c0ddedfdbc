# cython: language_level=3
"""Compiled kernels: in-place Walsh-Hadamard butterflies and diagonal phase vectors."""
import numpy as np

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

ctypedef fused scalar_t:
    double
    double complex


def fwht_inplace(scalar_t[::1] a):
    """Unnormalised in-place transform; ``len(a)`` must be a power of two."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t h = 1, i, j
    cdef scalar_t u, v
    with nogil:
        while h < n:
            i = 0
            while i < n:
                for j in range(i, i + h):
                    u = a[j]
                    v = a[j + h]
                    a[j] = u + v
                    a[j + h] = u - v
                i += 2 * h
            h *= 2


def phase_vector(double[::1] theta, long long[::1] pair_i, long long[::1] pair_j,
                 double[::1] pair_val, bint parity_flip):
    """Diagonal phase for every basis index y.

    ``parity_flip`` multiplies the single-qubit part by (-1)^popcount(y).
    """
    cdef Py_ssize_t n = theta.shape[0]
    cdef Py_ssize_t n_pairs = pair_val.shape[0]
    cdef unsigned long long dim = 1ULL << n
    cdef unsigned long long y
    cdef Py_ssize_t i, k
    cdef double s
    out = np.empty(dim, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for y in range(dim):
            s = 0.0
            for i in range(n):
                if (y >> i) & 1:
                    s -= theta[i]
                else:
                    s += theta[i]
            if parity_flip and (__builtin_popcountll(y) & 1):
                s = -s
            for k in range(n_pairs):
                if ((y >> pair_i[k]) ^ (y >> pair_j[k])) & 1:
                    s -= pair_val[k]
                else:
                    s += pair_val[k]
            o[y] = s
    return out
