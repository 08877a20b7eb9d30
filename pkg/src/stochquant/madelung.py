"""Density / phase-gradient decomposition and the derived velocity fields.

``psi = sqrt(rho) exp(i S / lambda)``.  The phase gradient is read off as
``lambda Im(conj(psi) dpsi) / rho`` and the log-density gradient as
``2 Re(conj(psi) dpsi) / rho``, both pointwise, so no phase unwrapping is
ever needed.  Vector fields have shape ``(dim, *grid.shape)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .action import HamiltonianSpec
from .errors import ConfigurationError, DegenerateStateError
from .numerics import SpatialGrid, gradient, integrate, second_difference
from .solver import WaveFunction

RHO_EPS = 1e-12
NORM_TOL = 1e-8


@dataclass(frozen=True)
class HydroFields:
    rho: np.ndarray
    s_grad: np.ndarray
    rho_grad_ratio: np.ndarray
    node_mask: np.ndarray
    grid: SpatialGrid
    lambda_mag: float
    time: float = 0.0

    def filled(self) -> "HydroFields":
        """Copy with masked cells taking the value of the nearest unmasked cell."""
        return HydroFields(
            self.rho,
            fill_nodes(self.s_grad, self.node_mask),
            fill_nodes(self.rho_grad_ratio, self.node_mask),
            self.node_mask,
            self.grid,
            self.lambda_mag,
            self.time,
        )

    def to_csv(self, path) -> None:
        coords = [c.ravel() for c in self.grid.mesh()]
        names = ["q"] if self.grid.dim == 1 else ["qx", "qy"]
        sg = ["s_grad"] if self.grid.dim == 1 else ["s_grad_x", "s_grad_y"]
        cols = coords + [self.rho.ravel()] + [s.ravel() for s in self.s_grad] + [self.node_mask.ravel().astype(int)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["rho"] + sg + ["mask"])
            for row in zip(*cols):
                w.writerow([repr(float(x)) if not isinstance(x, (np.integer, int)) else int(x) for x in row])


def fill_nodes(field: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace masked cells by their nearest unmasked neighbour (per component)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.array(field, copy=True)
    if mask.all():
        raise DegenerateStateError("every cell is masked")
    idx = distance_transform_edt(mask, return_distances=False, return_indices=True)
    out = np.array(field, copy=True)
    if out.shape == mask.shape:
        return out[tuple(idx)]
    return np.stack([comp[tuple(idx)] for comp in out])


def decompose(wf: WaveFunction, rho_eps: float = RHO_EPS) -> HydroFields:
    """Split ``psi`` into ``rho``, the phase gradient and ``d rho / rho``.

    ``rho_eps`` is relative to ``max(rho)``; cells below it form the node
    mask and carry NaN in the gradient fields.
    """
    grid = wf.grid
    rho = np.abs(wf.psi) ** 2
    peak = float(rho.max())
    if not peak > 0 or peak * grid.cell_volume * rho.size < 1e-300:
        raise DegenerateStateError("wave function vanishes everywhere")
    total = float(integrate(rho, grid))
    if abs(total - 1.0) > NORM_TOL:
        raise ConfigurationError(f"decompose expects a normalized state, got norm^2 = {total:.12g}")
    mask = rho < rho_eps * peak
    if mask.all():
        raise DegenerateStateError("every cell lies below rho_eps")
    safe = np.where(mask, 1.0, rho)
    s_grad = np.empty((grid.dim, *grid.shape))
    ratio_out = np.empty((grid.dim, *grid.shape))
    for ax in range(grid.dim):
        ratio = np.conj(wf.psi) * gradient(wf.psi, grid, ax) / safe
        s_grad[ax] = np.where(mask, np.nan, wf.lambda_mag * ratio.imag)
        ratio_out[ax] = np.where(mask, np.nan, 2.0 * ratio.real)
    return HydroFields(rho, s_grad, ratio_out, mask, grid, wf.lambda_mag, wf.time)


def _metric(spec: HamiltonianSpec, grid: SpatialGrid) -> np.ndarray:
    coords = grid.mesh()
    return np.stack([spec.metric_at(ax, *coords) for ax in range(grid.dim)])


def _vector_potential(spec: HamiltonianSpec, grid: SpatialGrid) -> np.ndarray:
    coords = grid.mesh()
    return np.stack([spec.vector_potential_at(ax, *coords) for ax in range(grid.dim)])


def bohmian_velocity(h: HydroFields, spec: HamiltonianSpec) -> np.ndarray:
    """``g (dS - a)``; NaN on the node mask."""
    return _metric(spec, h.grid) * (h.s_grad - _vector_potential(spec, h.grid))


def osmotic_term(h: HydroFields, lambda_signed: float) -> np.ndarray:
    """``(lambda / 2) d rho / rho`` before the metric factor; NaN on the node mask."""
    return 0.5 * lambda_signed * h.rho_grad_ratio


def actual_velocity(h: HydroFields, spec: HamiltonianSpec, sign: int, lambda_mag: float | None = None) -> np.ndarray:
    """Velocity on the ``sign`` branch, ``g (dS + sign (lambda/2) d rho / rho - a)``."""
    if sign not in (1, -1):
        raise ConfigurationError("sign must be +1 or -1")
    lam = h.lambda_mag if lambda_mag is None else lambda_mag
    return _metric(spec, h.grid) * (h.s_grad + osmotic_term(h, sign * lam) - _vector_potential(spec, h.grid))


def advection_fields(h: HydroFields, spec: HamiltonianSpec) -> tuple[np.ndarray, np.ndarray]:
    """Node-filled Bohmian velocity and metric-weighted osmotic speed, as used by the particle kernels."""
    f = h.filled()
    g = _metric(spec, h.grid)
    vb = g * (f.s_grad - _vector_potential(spec, h.grid))
    w = g * osmotic_term(f, h.lambda_mag)
    return np.ascontiguousarray(vb), np.ascontiguousarray(w)


def quantum_potential(h: HydroFields, spec: HamiltonianSpec) -> np.ndarray:
    """``-(lambda^2 / 2) sum_i d_i(g d_i R) / R`` with ``R = sqrt(rho)``; NaN on the mask."""
    grid = h.grid
    r = np.sqrt(h.rho)
    g = _metric(spec, grid)
    acc = np.zeros(grid.shape)
    for ax in range(grid.dim):
        acc += g[ax] * second_difference(r, grid, ax) + gradient(g[ax], grid, ax) * gradient(r, grid, ax)
    q = -0.5 * h.lambda_mag**2 * acc / np.where(h.node_mask, 1.0, r)
    return np.where(h.node_mask, np.nan, q)


def phase_time_derivative(psi_prev: np.ndarray, psi: np.ndarray, psi_next: np.ndarray, dt: float, lambda_mag: float) -> np.ndarray:
    """``dS/dt`` from a centred difference, ``lambda Im(conj(psi) dpsi/dt) / rho``."""
    rho = np.abs(psi) ** 2
    dpsi = (psi_next - psi_prev) / (2 * dt)
    return lambda_mag * np.imag(np.conj(psi) * dpsi) / np.where(rho > 0, rho, 1.0)


def hj_residual(psi_prev: WaveFunction, psi: WaveFunction, psi_next: WaveFunction, dt: float,
                spec: HamiltonianSpec) -> np.ndarray:
    """Residual of ``dS/dt + g (dS - a)^2 / 2 + V + Q = 0``; NaN on the node mask."""
    h = decompose(psi)
    ds_dt = phase_time_derivative(psi_prev.psi, psi.psi, psi_next.psi, dt, psi.lambda_mag)
    g = _metric(spec, psi.grid)
    kin = 0.5 * np.sum(g * (h.s_grad - _vector_potential(spec, psi.grid)) ** 2, axis=0)
    res = ds_dt + kin + spec.potential_at(*psi.grid.mesh()) + quantum_potential(h, spec)
    return np.where(h.node_mask, np.nan, res)


def probability_current(wf: WaveFunction, spec: HamiltonianSpec) -> np.ndarray:
    """``rho v_B = g (lambda Im(conj(psi) dpsi) - a rho)``; smooth through nodes."""
    grid = wf.grid
    g = _metric(spec, grid)
    a = _vector_potential(spec, grid)
    rho = np.abs(wf.psi) ** 2
    j = np.stack([wf.lambda_mag * np.imag(np.conj(wf.psi) * gradient(wf.psi, grid, ax)) for ax in range(grid.dim)])
    return g * (j - a * rho)


def continuity_residual(psi_prev: WaveFunction, psi: WaveFunction, psi_next: WaveFunction, dt: float,
                        spec: HamiltonianSpec) -> np.ndarray:
    """``d rho / dt + div(rho v_B)`` with a centred time difference."""
    drho = (np.abs(psi_next.psi) ** 2 - np.abs(psi_prev.psi) ** 2) / (2 * dt)
    j = probability_current(psi, spec)
    return drho + sum(gradient(j[ax], psi.grid, ax) for ax in range(psi.grid.dim))


def density_identity_residual(rho: np.ndarray, grid: SpatialGrid, rho_eps: float = RHO_EPS) -> np.ndarray:
    """``(d rho / rho)^2 / 4 - d^2 rho / 2 rho + d^2 R / R`` (zero in the continuum); NaN on the mask."""
    mask = rho < rho_eps * rho.max()
    safe = np.where(mask, 1.0, rho)
    r = np.sqrt(rho)
    out = np.zeros(grid.shape)
    for ax in range(grid.dim):
        out += (gradient(rho, grid, ax) / safe) ** 2 / 4
        out -= second_difference(rho, grid, ax) / (2 * safe)
        out += second_difference(r, grid, ax) / np.sqrt(safe)
    return np.where(mask, np.nan, out)
