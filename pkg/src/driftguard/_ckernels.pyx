# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``; identical signatures."""
import numpy as np
cimport numpy as cnp
from libc.math cimport erfc
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

BACKEND = "cython"

cdef enum:
    GAUSSIAN = 0
    RECTANGULAR = 1
    EPANECHNIKOV = 2

# erfc underflows to 0 well before this many bandwidths
cdef double ZCUT = 40.0
cdef double INV_SQRT2 = 0.7071067811865476


cdef inline double _cut(int shape) noexcept nogil:
    # |z| beyond which the kernel cdf is exactly 0 or 1
    if shape == GAUSSIAN:
        return ZCUT
    if shape == RECTANGULAR:
        return 0.5
    return 1.0


cdef inline void _cdf_sf(double z, int shape, double* cdf, double* sf) noexcept nogil:
    cdef double u
    if shape == GAUSSIAN:
        # evaluate the small tail directly; the other side is its complement
        if z < 0.0:
            cdf[0] = 0.5 * erfc(-z * INV_SQRT2)
            sf[0] = 1.0 - cdf[0]
        else:
            sf[0] = 0.5 * erfc(z * INV_SQRT2)
            cdf[0] = 1.0 - sf[0]
    elif shape == RECTANGULAR:
        u = z + 0.5
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        cdf[0] = u
        sf[0] = 1.0 - u
    else:
        u = z
        if u < -1.0:
            u = -1.0
        elif u > 1.0:
            u = 1.0
        cdf[0] = 0.5 + 0.75 * u - 0.25 * u * u * u
        sf[0] = 0.5 - 0.75 * u + 0.25 * u * u * u


def binned_rows(base, shifts, double h, int shape, long lo_state, Py_ssize_t n_states):
    cdef const double[::1] b = np.sort(np.asarray(base, dtype=np.float64))
    cdef const double[::1] sh = np.ascontiguousarray(shifts, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0], r = sh.shape[0]
    out_arr = np.empty((r, n_states), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] lsum = np.empty(n_states + 1)
    cdef double[::1] usum = np.empty(n_states + 1)
    cdef Py_ssize_t i, e, s, left, right
    cdef double x, f, g, half = 0.5 * n, val, reach = _cut(shape) * h
    with nogil:
        for i in range(r):
            # samples below ``left`` sit entirely under the edge, samples from
            # ``right`` on entirely above it; both pointers only move forward
            left = 0
            right = 0
            for e in range(n_states + 1):
                x = lo_state - 0.5 + e - sh[i]
                while left < n and b[left] < x - reach:
                    left += 1
                while right < n and b[right] <= x + reach:
                    right += 1
                lsum[e] = <double>left
                usum[e] = <double>(n - right)
                for s in range(left, right):
                    _cdf_sf((x - b[s]) / h, shape, &f, &g)
                    lsum[e] += f
                    usum[e] += g
            for e in range(n_states):
                if lsum[e + 1] < half:
                    val = lsum[e + 1] - lsum[e]
                else:
                    val = usum[e] - usum[e + 1]
                out[i, e] = (val if val > 0.0 else 0.0) / n
    return out_arr


def restricted_survival(v1, mats, Py_ssize_t lo_idx, Py_ssize_t hi_idx):
    cdef const double[::1] v = np.ascontiguousarray(v1, dtype=np.float64)
    cdef const double[:, :, ::1] m = np.ascontiguousarray(mats, dtype=np.float64).reshape(
        len(mats), v.shape[0], v.shape[0]
    )
    cdef Py_ssize_t steps = m.shape[0], t, j
    cdef int alpha = <int>m.shape[1], w = <int>(hi_idx - lo_idx + 1), inc = 1
    cdef char trans = b"N"
    cdef double one = 1.0, zero = 0.0, out, total
    exceed_arr = np.zeros(steps)
    cdef double[::1] exceed = exceed_arr
    cdef double[::1] cur = np.empty(w)
    cdef double[::1] full = np.empty(alpha)
    for j in range(w):
        cur[j] = v[lo_idx + j]
    with nogil:
        for t in range(steps):
            if w > 0 and alpha > 0:
                # rows lo..hi of a C-ordered matrix are an (alpha x w)
                # column-major block, so full = block @ cur
                dgemv(&trans, &alpha, &w, &one, <double*>&m[t, lo_idx, 0], &alpha,
                      &cur[0], &inc, &zero, &full[0], &inc)
            out = 0.0
            for j in range(lo_idx):
                out += full[j]
            for j in range(hi_idx + 1, alpha):
                out += full[j]
            exceed[t] = out
            for j in range(w):
                cur[j] = full[lo_idx + j]
        total = 0.0
        for j in range(w):
            total += cur[j]
    return total, exceed_arr
