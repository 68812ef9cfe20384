# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the stencil kernels in ``_reference.py``.

Same contracts, same interior-only convention; loops are fused so each
kernel makes a single pass over its arrays.  Single-threaded on purpose:
reduction order is fixed, results are reproducible bit-for-bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"

ctypedef double complex cplx


def lap_h(cnp.ndarray[cplx, ndim=3] f, double inv_h2, double inv_dz2):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2]
    cdef cnp.ndarray[cplx, ndim=3] out = np.zeros((nx, ny, nz), dtype=np.complex128)
    cdef Py_ssize_t i, j, m
    cdef cplx c
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for m in range(1, nz - 1):
                c = f[i, j, m]
                out[i, j, m] = (
                    (f[i - 1, j, m] - 2.0 * c + f[i + 1, j, m]) * inv_h2
                    + (f[i, j - 1, m] - 2.0 * c + f[i, j + 1, m]) * inv_h2
                    + (f[i, j, m - 1] - 2.0 * c + f[i, j, m + 1]) * inv_dz2
                )
    return out


def lap_h_adjoint(cnp.ndarray[cplx, ndim=3] g, double inv_h2, double inv_dz2):
    cdef Py_ssize_t nx = g.shape[0], ny = g.shape[1], nz = g.shape[2]
    cdef cnp.ndarray[cplx, ndim=3] out = np.zeros((nx, ny, nz), dtype=np.complex128)
    cdef Py_ssize_t i, j, m
    cdef cplx gi
    cdef double diag = -2.0 * (2.0 * inv_h2 + inv_dz2)
    # Scatter each interior row of the symmetric stencil.
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for m in range(1, nz - 1):
                gi = g[i, j, m]
                if gi == 0:
                    continue
                out[i, j, m] = out[i, j, m] + diag * gi
                out[i - 1, j, m] = out[i - 1, j, m] + inv_h2 * gi
                out[i + 1, j, m] = out[i + 1, j, m] + inv_h2 * gi
                out[i, j - 1, m] = out[i, j - 1, m] + inv_h2 * gi
                out[i, j + 1, m] = out[i, j + 1, m] + inv_h2 * gi
                out[i, j, m - 1] = out[i, j, m - 1] + inv_dz2 * gi
                out[i, j, m + 1] = out[i, j, m + 1] + inv_dz2 * gi
    return out


def grad_h(cnp.ndarray[cplx, ndim=3] f, double inv_2h, double inv_2dz):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2]
    cdef cnp.ndarray[cplx, ndim=3] fx = np.zeros((nx, ny, nz), dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=3] fy = np.zeros((nx, ny, nz), dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=3] fz = np.zeros((nx, ny, nz), dtype=np.complex128)
    cdef Py_ssize_t i, j, m
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for m in range(1, nz - 1):
                fx[i, j, m] = (f[i + 1, j, m] - f[i - 1, j, m]) * inv_2h
                fy[i, j, m] = (f[i, j + 1, m] - f[i, j - 1, m]) * inv_2h
                fz[i, j, m] = (f[i, j, m + 1] - f[i, j, m - 1]) * inv_2dz
    return fx, fy, fz


def grad_h_adjoint(cnp.ndarray[cplx, ndim=3] gx, cnp.ndarray[cplx, ndim=3] gy,
                   cnp.ndarray[cplx, ndim=3] gz, double inv_2h, double inv_2dz):
    cdef Py_ssize_t nx = gx.shape[0], ny = gx.shape[1], nz = gx.shape[2]
    cdef cnp.ndarray[cplx, ndim=3] out = np.zeros((nx, ny, nz), dtype=np.complex128)
    cdef Py_ssize_t i, j, m
    cdef cplx g
    # Row i of the centered difference has +c at i+1 and -c at i-1, so the
    # transpose scatters +c*g[i] to i+1 and -c*g[i] to i-1.
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for m in range(1, nz - 1):
                g = gx[i, j, m]
                out[i + 1, j, m] = out[i + 1, j, m] + inv_2h * g
                out[i - 1, j, m] = out[i - 1, j, m] - inv_2h * g
                g = gy[i, j, m]
                out[i, j + 1, m] = out[i, j + 1, m] + inv_2h * g
                out[i, j - 1, m] = out[i, j - 1, m] - inv_2h * g
                g = gz[i, j, m]
                out[i, j, m + 1] = out[i, j, m + 1] + inv_2dz * g
                out[i, j, m - 1] = out[i, j, m - 1] - inv_2dz * g
    return out


def weighted_sumsq(cnp.ndarray[cplx, ndim=3] r, cnp.ndarray[double, ndim=1] wz):
    cdef Py_ssize_t nx = r.shape[0], ny = r.shape[1], nz = r.shape[2]
    cdef Py_ssize_t i, j, m
    cdef double acc = 0.0, re, im
    for i in range(nx):
        for j in range(ny):
            for m in range(nz):
                re = r[i, j, m].real
                im = r[i, j, m].imag
                acc += wz[m] * (re * re + im * im)
    return acc
