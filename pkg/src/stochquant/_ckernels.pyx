# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Operation-for-operation mirror of ``_kernels_py``; keep the two in sync.
Loops run without the GIL so disjoint trajectory blocks can be advanced
from several threads.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fmod, copysign
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TO_UNIT = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double unit(uint64_t key, uint64_t counter) noexcept nogil:
    return <double>(mix64(key + (counter + 1) * GOLDEN) >> 11) * TO_UNIT


cdef inline double pymod(double a, double b) noexcept nogil:
    cdef double r = fmod(a, b)
    if r != 0.0:
        if (b < 0.0) != (r < 0.0):
            r += b
    else:
        r = copysign(0.0, b)
    return r


cdef inline double lerp(double a, double b, double t) noexcept nogil:
    return a + (b - a) * t


def uniforms(const uint64_t[::1] keys, long long counter):
    cdef Py_ssize_t n = keys.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t c = <uint64_t>counter
    with nogil:
        for i in range(n):
            o[i] = unit(keys[i], c)
    return out


def advance_1d(double[::1] q, double[::1] sign, unsigned char[::1] alive,
               const double[::1] vb, const double[::1] w,
               double x0, double h, bint periodic, double dt,
               const uint64_t[::1] keys, long long counter, double flip_prob):
    cdef Py_ssize_t n = q.shape[0], i
    cdef Py_ssize_t m = vb.shape[0]
    cdef int64_t j, j1
    cdef double x, s, jf, f, u, v, last = x0 + (m - 1) * h, period = m * h
    cdef uint64_t c = <uint64_t>counter
    with nogil:
        for i in range(n):
            u = unit(keys[i], c)
            if not alive[i]:
                continue
            x = q[i]
            s = (x - x0) / h
            jf = floor(s)
            if periodic:
                f = s - jf
                j = <int64_t>jf
                j = j % m
                if j < 0:
                    j += m
                j1 = (j + 1) % m
            else:
                if jf > m - 2:
                    jf = m - 2
                f = s - jf
                j = <int64_t>jf
                j1 = j + 1
            v = lerp(vb[j], vb[j1], f) + sign[i] * lerp(w[j], w[j1], f)
            x = x + v * dt
            if periodic:
                x = x0 + pymod(x - x0, period)
            elif not ((x >= x0) and (x <= last)):
                alive[i] = 0
            q[i] = x
            if u < flip_prob:
                sign[i] = -sign[i]


cdef inline double bilerp(const double[:, ::1] a, int64_t jx, int64_t jx1, int64_t jy, int64_t jy1,
                          double fx, double fy) noexcept nogil:
    cdef double lo = lerp(a[jx, jy], a[jx1, jy], fx)
    cdef double hi = lerp(a[jx, jy1], a[jx1, jy1], fx)
    return lerp(lo, hi, fy)


def advance_2d(double[:, ::1] q, double[::1] sign, unsigned char[::1] alive,
               const double[:, ::1] vbx, const double[:, ::1] vby,
               const double[:, ::1] wx, const double[:, ::1] wy,
               double x0, double y0, double hx, double hy, bint periodic, double dt,
               const uint64_t[::1] keys, long long counter, double flip_prob):
    cdef Py_ssize_t n = q.shape[0], i
    cdef Py_ssize_t mx = vbx.shape[0], my = vbx.shape[1]
    cdef int64_t jx, jx1, jy, jy1
    cdef double x, y, sx, sy, jfx, jfy, fx, fy, u, s
    cdef double lastx = x0 + (mx - 1) * hx, lasty = y0 + (my - 1) * hy
    cdef uint64_t c = <uint64_t>counter
    with nogil:
        for i in range(n):
            u = unit(keys[i], c)
            if not alive[i]:
                continue
            x = q[i, 0]
            y = q[i, 1]
            sx = (x - x0) / hx
            sy = (y - y0) / hy
            jfx = floor(sx)
            jfy = floor(sy)
            if periodic:
                fx = sx - jfx
                fy = sy - jfy
                jx = (<int64_t>jfx) % mx
                if jx < 0:
                    jx += mx
                jy = (<int64_t>jfy) % my
                if jy < 0:
                    jy += my
                jx1 = (jx + 1) % mx
                jy1 = (jy + 1) % my
            else:
                if jfx > mx - 2:
                    jfx = mx - 2
                if jfy > my - 2:
                    jfy = my - 2
                fx = sx - jfx
                fy = sy - jfy
                jx = <int64_t>jfx
                jy = <int64_t>jfy
                jx1 = jx + 1
                jy1 = jy + 1
            s = sign[i]
            x = x + (bilerp(vbx, jx, jx1, jy, jy1, fx, fy) + s * bilerp(wx, jx, jx1, jy, jy1, fx, fy)) * dt
            y = y + (bilerp(vby, jx, jx1, jy, jy1, fx, fy) + s * bilerp(wy, jx, jx1, jy, jy1, fx, fy)) * dt
            if periodic:
                x = x0 + pymod(x - x0, mx * hx)
                y = y0 + pymod(y - y0, my * hy)
            elif not ((x >= x0) and (x <= lastx) and (y >= y0) and (y <= lasty)):
                alive[i] = 0
            q[i, 0] = x
            q[i, 1] = y
            if u < flip_prob:
                sign[i] = -sign[i]


class TridiagonalFactor:
    """Thomas-algorithm factors of a complex tridiagonal matrix."""

    def __init__(self, lower, cprime, inv_den):
        self.lower = lower
        self.cprime = cprime
        self.inv_den = inv_den


def tridiag_factor(lower, diag, upper):
    cdef const double complex[::1] a = np.ascontiguousarray(lower, dtype=np.complex128)
    cdef const double complex[::1] b = np.ascontiguousarray(diag, dtype=np.complex128)
    cdef const double complex[::1] c = np.ascontiguousarray(upper, dtype=np.complex128)
    cdef Py_ssize_t n = b.shape[0], i
    cp_arr = np.zeros(n, dtype=np.complex128)
    inv_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] cp = cp_arr
    cdef double complex[::1] inv = inv_arr
    cdef double complex den
    inv[0] = 1.0 / b[0]
    if n > 1:
        cp[0] = c[0] * inv[0]
    for i in range(1, n):
        den = b[i] - a[i - 1] * cp[i - 1]
        inv[i] = 1.0 / den
        if i < n - 1:
            cp[i] = c[i] * inv[i]
    return TridiagonalFactor(np.asarray(a), cp_arr, inv_arr)


def tridiag_matvec(lower, diag, upper, x):
    cdef const double complex[::1] a = np.ascontiguousarray(lower, dtype=np.complex128)
    cdef const double complex[::1] b = np.ascontiguousarray(diag, dtype=np.complex128)
    cdef const double complex[::1] c = np.ascontiguousarray(upper, dtype=np.complex128)
    cdef const double complex[::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef Py_ssize_t n = b.shape[0], i
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] y = out
    with nogil:
        for i in range(n):
            y[i] = b[i] * xv[i]
            if i > 0:
                y[i] = y[i] + a[i - 1] * xv[i - 1]
            if i < n - 1:
                y[i] = y[i] + c[i] * xv[i + 1]
    return out


def cn_tridiag_step(factor, b_lower, b_diag, b_upper, psi):
    """Return ``A^{-1} B psi`` for the factored ``A`` and banded ``B``."""
    rhs = tridiag_matvec(b_lower, b_diag, b_upper, psi)
    cdef double complex[::1] d = rhs
    cdef const double complex[::1] a = factor.lower
    cdef const double complex[::1] cp = factor.cprime
    cdef const double complex[::1] inv = factor.inv_den
    cdef Py_ssize_t n = d.shape[0], i
    with nogil:
        d[0] = d[0] * inv[0]
        for i in range(1, n):
            d[i] = (d[i] - a[i - 1] * d[i - 1]) * inv[i]
        for i in range(n - 2, -1, -1):
            d[i] = d[i] - cp[i] * d[i + 1]
    return rhs
