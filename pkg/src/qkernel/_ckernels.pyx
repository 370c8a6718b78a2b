# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled particle-method kernels: linear binning and uniform-grid interpolation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def linear_bin(const double[::1] x, double origin, double spacing, Py_ssize_t n):
    """Cloud-in-cell deposit of unit weights onto nodes origin + j*spacing."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n)
    cdef double[::1] acc = out
    cdef Py_ssize_t i, j, m = x.shape[0]
    cdef double pos, frac
    for i in range(m):
        pos = (x[i] - origin) / spacing
        j = <Py_ssize_t>floor(pos)
        frac = pos - j
        if j >= 0 and j < n - 1:
            acc[j] += 1.0 - frac
            acc[j + 1] += frac
        elif j == n - 1 and frac == 0.0:
            acc[j] += 1.0
    return out


def interp_uniform(const double[::1] values, double origin, double spacing,
                   const double[::1] x):
    """Linear interpolation on a uniform grid; zero outside."""
    cdef Py_ssize_t n = values.shape[0], m = x.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(m)
    cdef double[::1] res = out
    cdef double pos, frac
    for i in range(m):
        pos = (x[i] - origin) / spacing
        j = <Py_ssize_t>floor(pos)
        if j < 0 or j >= n - 1:
            res[i] = values[n - 1] if (j == n - 1 and pos == j) else 0.0
            continue
        frac = pos - j
        res[i] = values[j] * (1.0 - frac) + values[j + 1] * frac
    return out


def mckean_step(double[::1] x, const double[::1] ratio_grid, double origin, double spacing,
                const double[::1] z, double scale):
    """In-place Euler step x += scale * sqrt(ratio(x)) * z; returns the number of
    particles outside the grid (those take a plain diffusion step).

    ``ratio_grid`` is already floored, so negative ratios never appear.
    """
    cdef Py_ssize_t n = ratio_grid.shape[0], m = x.shape[0], i, j
    cdef double pos, frac, r
    cdef Py_ssize_t outside = 0
    for i in range(m):
        pos = (x[i] - origin) / spacing
        j = <Py_ssize_t>floor(pos)
        if j < 0 or j >= n - 1:
            r = 1.0
            outside += 1
        else:
            frac = pos - j
            r = ratio_grid[j] * (1.0 - frac) + ratio_grid[j + 1] * frac
        x[i] += scale * sqrt(r) * z[i]
    return outside
