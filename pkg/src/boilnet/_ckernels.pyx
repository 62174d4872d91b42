# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, sqrt

cnp.import_array()


def block_mean(double[:, :, :, :] a, int kx, int ky, int kz, int kt):
    cdef Py_ssize_t bx = a.shape[0] // kx
    cdef Py_ssize_t by = a.shape[1] // ky
    cdef Py_ssize_t bz = a.shape[2] // kz
    cdef Py_ssize_t bt = a.shape[3] // kt
    out_arr = np.zeros((bx, by, bz, bt), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t I, J, K, T, i, j, k, t
    cdef double acc
    cdef double inv = 1.0 / (<double>kx * ky * kz * kt)
    # fixed order: t, z, y, x within each block
    with nogil:
        for I in range(bx):
            for J in range(by):
                for K in range(bz):
                    for T in range(bt):
                        acc = 0.0
                        for t in range(T * kt, (T + 1) * kt):
                            for k in range(K * kz, (K + 1) * kz):
                                for j in range(J * ky, (J + 1) * ky):
                                    for i in range(I * kx, (I + 1) * kx):
                                        acc += a[i, j, k, t]
                        out[I, J, K, T] = acc * inv
    return out_arr


def bias_elu(double[:, ::1] z, const double[::1] b, double alpha,
             double[:, ::1] h, double[:, ::1] dh):
    """In place: z += b, h = elu(z), dh = elu'(z)."""
    cdef Py_ssize_t n = z.shape[0], m = z.shape[1], r, c
    cdef double v
    with nogil:
        for r in range(n):
            for c in range(m):
                v = z[r, c] + b[c]
                z[r, c] = v
                if v >= 0.0:
                    h[r, c] = v
                    dh[r, c] = 1.0
                else:
                    h[r, c] = alpha * expm1(v)
                    dh[r, c] = alpha * exp(v)


def adam_update(double[::1] theta, const double[::1] g, double[::1] m,
                double[::1] v, double lr, double beta1, double beta2,
                double delta, double bc1, double bc2):
    """In place Adam update on flat parameter/moment buffers."""
    cdef Py_ssize_t n = theta.shape[0], i
    cdef double gi, mi, vi
    with nogil:
        for i in range(n):
            gi = g[i]
            mi = beta1 * m[i] + (1.0 - beta1) * gi
            vi = beta2 * v[i] + (1.0 - beta2) * (gi * gi)
            m[i] = mi
            v[i] = vi
            theta[i] = theta[i] - lr * (mi / bc1) / (sqrt(vi / bc2) + delta)
