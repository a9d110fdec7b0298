# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the elementwise kernels in ``kpstab.kernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def mkp2_terms(const double[:, :] w, const double[:, :] wx, const double[:, :] V, const double[:] q, const double[:] dq):
    cdef Py_ssize_t nx = w.shape[0], ny = w.shape[1], i, j
    flux = np.empty((nx, ny))
    src = np.empty((nx, ny))
    cdef double[:, :] f = flux
    cdef double[:, :] s = src
    cdef double qi, dqi, wij
    with nogil:
        for i in range(nx):
            qi = q[i]
            dqi = dq[i]
            for j in range(ny):
                wij = w[i, j]
                f[i, j] = wij * (3.0 * qi * qi + wij * (3.0 * qi + wij))
                s[i, j] = -6.0 * (wx[i, j] + dqi) * V[i, j]
    return flux, src


def etd_stage(const double complex[:, :] E2, const double complex[:, :] u, const double complex[:, :] Q, const double complex[:, :] N):
    cdef Py_ssize_t a = u.shape[0], b = u.shape[1], i, j
    out = np.empty((a, b), dtype=np.complex128)
    cdef double complex[:, :] o = out
    with nogil:
        for i in range(a):
            for j in range(b):
                o[i, j] = E2[i, j] * u[i, j] + Q[i, j] * N[i, j]
    return out


def etd_combine(const double complex[:, :] E, const double complex[:, :] u, const double complex[:, :] f1,
                const double complex[:, :] f2, const double complex[:, :] f3, const double complex[:, :] Nu,
                const double complex[:, :] Na, const double complex[:, :] Nb, const double complex[:, :] Nc):
    cdef Py_ssize_t a = u.shape[0], b = u.shape[1], i, j
    out = np.empty((a, b), dtype=np.complex128)
    cdef double complex[:, :] o = out
    with nogil:
        for i in range(a):
            for j in range(b):
                o[i, j] = (E[i, j] * u[i, j] + f1[i, j] * Nu[i, j]
                           + 2.0 * f2[i, j] * (Na[i, j] + Nb[i, j]) + f3[i, j] * Nc[i, j])
    return out


def weighted_sum(const double[:, :] values, const double[:] weight):
    cdef Py_ssize_t nx = values.shape[0], ny = values.shape[1], i, j
    cdef double total = 0.0, row
    with nogil:
        for i in range(nx):
            row = 0.0
            for j in range(ny):
                row = row + values[i, j]
            total = total + weight[i] * row
    return total
