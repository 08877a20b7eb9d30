"""Initial wave functions.

Every constructor returns a :class:`WaveFunction` normalized on its grid
(the discrete norm is one to rounding).
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import eval_hermite, gammaln

from .errors import ConfigurationError, DomainError
from .numerics import SpatialGrid, norm
from .solver import WaveFunction


def _per_axis(value, dim: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (dim,)) if np.ndim(value) == 0 else np.asarray(value, dtype=float)
    if arr.shape != (dim,):
        raise ConfigurationError(f"{name} needs {dim} component(s), got {np.shape(value)}")
    return arr


def _finish(psi: np.ndarray, grid: SpatialGrid, lambda_mag: float) -> WaveFunction:
    n = norm(psi, grid)
    if not n > 0 or not np.isfinite(n):
        raise DomainError("state has zero norm on this grid")
    return WaveFunction(psi / n, grid, 0.0, lambda_mag)


def gaussian_profile(grid: SpatialGrid, center=0.0, width=1.0, boost=0.0, lambda_mag: float = 1.0) -> np.ndarray:
    """Unnormalized ``exp(-(q - c)^2 / 4 sigma^2 + i p0 q / lambda)``; ``|psi|^2`` has std ``sigma``."""
    c = _per_axis(center, grid.dim, "center")
    s = _per_axis(width, grid.dim, "width")
    p0 = _per_axis(boost, grid.dim, "boost")
    if not np.all(s > 0):
        raise DomainError("width must be > 0")
    psi = np.ones(grid.shape, dtype=np.complex128)
    for ax, q in enumerate(grid.mesh()):
        psi = psi * np.exp(-((q - c[ax]) ** 2) / (4 * s[ax] ** 2) + 1j * p0[ax] * q / lambda_mag)
    return psi


def gaussian(grid: SpatialGrid, center=0.0, width=1.0, boost=0.0, lambda_mag: float = 1.0) -> WaveFunction:
    return _finish(gaussian_profile(grid, center, width, boost, lambda_mag), grid, lambda_mag)


def oscillator_profile(q: np.ndarray, n: int, mass: float = 1.0, omega: float = 1.0, lambda_mag: float = 1.0, center: float = 0.0):
    """Analytic eigenfunction ``n`` of ``p^2/2m + m omega^2 q^2 / 2`` (continuum normalization)."""
    if n < 0 or int(n) != n:
        raise DomainError("oscillator level must be a non-negative integer")
    if not (mass > 0 and omega > 0):
        raise DomainError("mass and omega must be > 0")
    alpha = mass * omega / lambda_mag
    x = np.sqrt(alpha) * (np.asarray(q) - center)
    log_norm = 0.25 * np.log(alpha / np.pi) - 0.5 * (n * np.log(2.0) + gammaln(n + 1))
    return np.exp(log_norm - x**2 / 2) * eval_hermite(int(n), x)


def oscillator_eigenstate(grid: SpatialGrid, n: int = 0, mass: float = 1.0, omega: float = 1.0,
                          lambda_mag: float = 1.0, center=0.0) -> WaveFunction:
    c = _per_axis(center, grid.dim, "center")
    levels = _per_axis(n, grid.dim, "n").astype(int)
    psi = np.ones(grid.shape, dtype=np.complex128)
    for ax, q in enumerate(grid.mesh()):
        psi = psi * oscillator_profile(q, int(levels[ax]), mass, omega, lambda_mag, c[ax])
    return _finish(psi, grid, lambda_mag)


def plane_wave(grid: SpatialGrid, momentum, lambda_mag: float = 1.0) -> WaveFunction:
    """``exp(i p.q / lambda)``; the momentum must fit the periodic box."""
    if not grid.periodic:
        raise ConfigurationError("plane waves need a periodic grid")
    p = _per_axis(momentum, grid.dim, "momentum")
    phase = sum(p[ax] * q for ax, q in enumerate(grid.mesh()))
    return _finish(np.exp(1j * phase / lambda_mag), grid, lambda_mag)


def superposition(parts: Sequence[WaveFunction], coefficients: Sequence[complex]) -> WaveFunction:
    if not parts or len(parts) != len(coefficients):
        raise ConfigurationError("superposition needs one coefficient per part")
    grid = parts[0].grid
    lam = parts[0].lambda_mag
    if any(p.grid != grid or p.lambda_mag != lam for p in parts):
        raise ConfigurationError("superposed states must share grid and lambda")
    psi = sum(complex(c) * p.psi for c, p in zip(coefficients, parts))
    return _finish(psi, grid, lam)


def vortex(grid: SpatialGrid, width: float = 1.0, charge: int = 1, lambda_mag: float = 1.0, center=(0.0, 0.0)) -> WaveFunction:
    """``(x + i y)^l exp(-r^2 / 4 sigma^2)``: phase ``l atan2(y, x)``, angular momentum ``l lambda``."""
    if grid.dim != 2:
        raise ConfigurationError("vortex states are two-dimensional")
    if int(charge) != charge:
        raise DomainError("vortex charge must be an integer")
    x, y = grid.mesh()
    z = (x - center[0]) + 1j * np.sign(charge or 1) * (y - center[1])
    psi = z ** abs(int(charge)) * np.exp(-np.abs(z) ** 2 / (4 * width**2))
    return _finish(psi, grid, lambda_mag)
