"""Numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors them operation
for operation so both backends agree bit for bit on IEEE-754 hardware.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .rng import uniforms_from_keys

BACKEND = "python"


def uniforms(keys: np.ndarray, counter: int) -> np.ndarray:
    return uniforms_from_keys(np.ascontiguousarray(keys, dtype=np.uint64), counter)


def _cell_1d(x, x0, h, m, periodic):
    s = (x - x0) / h
    j = np.floor(s)
    if periodic:
        f = s - j
        j = np.mod(j.astype(np.int64), m)
        j1 = (j + 1) % m
    else:
        j = np.minimum(j, m - 2)
        f = s - j
        j = j.astype(np.int64)
        j1 = j + 1
    return j, j1, f


def _lerp(a, b, t):
    return a + (b - a) * t


def advance_1d(q, sign, alive, vb, w, x0, h, periodic, dt, keys, counter, flip_prob):
    """One explicit Euler step of the sign-switching velocity, in place.

    ``q`` float64[n], ``sign`` float64[n] of +-1, ``alive`` uint8[n].
    The particle moves with the current branch, then the branch flips with
    probability ``flip_prob`` so the stored sign is fresh for the next step.
    """
    m = vb.shape[0]
    u = uniforms(keys, counter)
    live = alive.astype(bool)
    x = q[live]
    s = sign[live]
    j, j1, f = _cell_1d(x, x0, h, m, periodic)
    v = _lerp(vb[j], vb[j1], f) + s * _lerp(w[j], w[j1], f)
    x = x + v * dt
    if periodic:
        x = x0 + np.mod(x - x0, m * h)
    else:
        last = x0 + (m - 1) * h
        out = ~((x >= x0) & (x <= last))
        idx = np.flatnonzero(live)
        alive[idx[out]] = 0
    q[live] = x
    flip = (u < flip_prob) & live
    sign[flip] = -sign[flip]


def advance_2d(q, sign, alive, vbx, vby, wx, wy, x0, y0, hx, hy, periodic, dt, keys, counter, flip_prob):
    """2D counterpart of :func:`advance_1d` with bilinear interpolation."""
    mx, my = vbx.shape
    u = uniforms(keys, counter)
    live = alive.astype(bool)
    x = q[live, 0]
    y = q[live, 1]
    s = sign[live]
    jx, jx1, fx = _cell_1d(x, x0, hx, mx, periodic)
    jy, jy1, fy = _cell_1d(y, y0, hy, my, periodic)

    def interp(a):
        lo = _lerp(a[jx, jy], a[jx1, jy], fx)
        hi = _lerp(a[jx, jy1], a[jx1, jy1], fx)
        return _lerp(lo, hi, fy)

    x = x + (interp(vbx) + s * interp(wx)) * dt
    y = y + (interp(vby) + s * interp(wy)) * dt
    if periodic:
        x = x0 + np.mod(x - x0, mx * hx)
        y = y0 + np.mod(y - y0, my * hy)
    else:
        lastx = x0 + (mx - 1) * hx
        lasty = y0 + (my - 1) * hy
        out = ~((x >= x0) & (x <= lastx) & (y >= y0) & (y <= lasty))
        idx = np.flatnonzero(live)
        alive[idx[out]] = 0
    q[live, 0] = x
    q[live, 1] = y
    flip = (u < flip_prob) & live
    sign[flip] = -sign[flip]


class TridiagonalFactor:
    """Banded storage of a complex tridiagonal matrix for repeated solves."""

    def __init__(self, lower, diag, upper):
        n = diag.shape[0]
        ab = np.zeros((3, n), dtype=np.complex128)
        ab[0, 1:] = upper
        ab[1] = diag
        ab[2, :-1] = lower
        self.ab = ab


def tridiag_factor(lower, diag, upper):
    return TridiagonalFactor(
        np.asarray(lower, np.complex128), np.asarray(diag, np.complex128), np.asarray(upper, np.complex128)
    )


def tridiag_matvec(lower, diag, upper, x):
    y = diag * x
    y[1:] += lower * x[:-1]
    y[:-1] += upper * x[1:]
    return y


def cn_tridiag_step(factor, b_lower, b_diag, b_upper, psi):
    """Return ``A^{-1} B psi`` for the factored ``A`` and banded ``B``."""
    rhs = tridiag_matvec(b_lower, b_diag, b_upper, psi)
    return solve_banded((1, 1), factor.ab, rhs, check_finite=False)
