"""Uniform grids, second-order stencils and quadrature.

Fields are plain numpy arrays whose shape equals ``grid.shape``.  The
boundary condition is a property of the grid, so the differential operators
and the Hamiltonian built on the same grid can never disagree about it.

Node placement:

* ``dirichlet``: ``N`` interior nodes, ``h = (q_max - q_min) / (N + 1)``;
  the field vanishes at ``q_min`` and ``q_max``.
* ``periodic``: ``N`` nodes, ``h = (q_max - q_min) / N``; ``q_max`` is
  identified with ``q_min``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError

BOUNDARIES = ("dirichlet", "periodic")


@dataclass(frozen=True)
class SpatialGrid:
    extent: tuple[tuple[float, float], ...]
    points: tuple[int, ...]
    boundary: str = "dirichlet"

    def __post_init__(self):
        extent = tuple((float(a), float(b)) for a, b in self.extent)
        points = tuple(int(n) for n in self.points)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "points", points)
        if len(extent) not in (1, 2) or len(points) != len(extent):
            raise ConfigurationError("grid dimension must be 1 or 2 with one extent and point count per axis")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        for (lo, hi), n in zip(extent, points):
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
                raise ConfigurationError(f"grid extent must be finite and increasing, got ({lo}, {hi})")
            if n < 8:
                raise ConfigurationError(f"grid needs at least 8 points per axis, got {n}")

    @classmethod
    def line(cls, q_min: float, q_max: float, points: int, boundary: str = "dirichlet") -> "SpatialGrid":
        return cls(((q_min, q_max),), (points,), boundary)

    @classmethod
    def plane(cls, extent_x, extent_y, points, boundary: str = "dirichlet") -> "SpatialGrid":
        if np.ndim(points) == 0:
            points = (points, points)
        return cls((tuple(extent_x), tuple(extent_y)), tuple(points), boundary)

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        pad = 0 if self.periodic else 1
        return tuple((hi - lo) / (n + pad) for (lo, hi), n in zip(self.extent, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        off = 0 if self.periodic else 1
        return tuple(
            lo + (np.arange(n) + off) * h for (lo, _), n, h in zip(self.extent, self.points, self.spacing)
        )

    def faces(self, axis: int = 0) -> np.ndarray:
        """Midpoints between nodes along ``axis``.

        Dirichlet grids have ``N + 1`` faces (including the two next to the
        walls); periodic grids have ``N`` (the last wraps around).
        """
        x = self.axes[axis]
        h = self.spacing[axis]
        if self.periodic:
            return x + h / 2
        return np.concatenate(([x[0] - h / 2], x + h / 2))

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @property
    def node_range(self) -> tuple[tuple[float, float], ...]:
        """Closed interval spanned by the nodes along each axis."""
        return tuple((float(x[0]), float(x[-1])) for x in self.axes)

    def check(self, field: np.ndarray, name: str = "field") -> np.ndarray:
        field = np.asarray(field)
        if field.shape != self.shape:
            raise ConfigurationError(f"{name} has shape {field.shape}, grid expects {self.shape}")
        return field

    def contains(self, q) -> np.ndarray:
        """Whether points (shape ``(..., dim)`` or ``(...)`` in 1D) lie within the node range."""
        q = np.asarray(q, dtype=float)
        if self.dim == 1 and (q.ndim == 0 or q.shape[-1] != 1):
            q = q[..., None]
        ok = np.ones(q.shape[:-1], dtype=bool)
        for ax, (lo, hi) in enumerate(self.extent if self.periodic else self.node_range):
            ok &= (q[..., ax] >= lo) & (q[..., ax] <= hi)
        return ok

    def to_dict(self) -> dict:
        return {
            "extent": [list(e) for e in self.extent],
            "points": list(self.points),
            "boundary": self.boundary,
        }


def _shift(f: np.ndarray, k: int, axis: int, periodic: bool) -> np.ndarray:
    """``g[j] = f[j + k]`` along ``axis`` with zero (Dirichlet) or wrapped ghosts."""
    if periodic:
        return np.roll(f, -k, axis=axis)
    out = np.zeros_like(f)
    n = f.shape[axis]
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    if k > 0:
        src[axis] = slice(k, n)
        dst[axis] = slice(0, n - k)
    else:
        src[axis] = slice(0, n + k)
        dst[axis] = slice(-k, n)
    out[tuple(dst)] = f[tuple(src)]
    return out


def gradient(f: np.ndarray, grid: SpatialGrid, axis: int = 0) -> np.ndarray:
    """Central second-order difference along ``axis``.

    Values beyond a Dirichlet wall are taken as zero, which makes the
    operator exactly antisymmetric (discrete integration by parts holds with
    no boundary terms for fields that vanish at the walls).
    """
    f = grid.check(f)
    h = grid.spacing[axis]
    return (_shift(f, 1, axis, grid.periodic) - _shift(f, -1, axis, grid.periodic)) / (2 * h)


def grad(f: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """All partial derivatives stacked on a leading axis: shape ``(dim, *grid.shape)``."""
    return np.stack([gradient(f, grid, ax) for ax in range(grid.dim)])


def second_difference(f: np.ndarray, grid: SpatialGrid, axis: int = 0) -> np.ndarray:
    f = grid.check(f)
    h = grid.spacing[axis]
    p = grid.periodic
    return (_shift(f, 1, axis, p) - 2 * f + _shift(f, -1, axis, p)) / h**2


def face_average(w: np.ndarray, grid: SpatialGrid, axis: int = 0) -> np.ndarray:
    """Node values averaged onto faces; Dirichlet wall faces copy the adjacent node."""
    w = grid.check(w, "weight")
    if grid.periodic:
        return 0.5 * (w + np.roll(w, -1, axis=axis))
    lo = np.take(w, [0], axis=axis)
    hi = np.take(w, [-1], axis=axis)
    inner = 0.5 * (np.take(w, np.arange(w.shape[axis] - 1), axis=axis) + np.take(w, np.arange(1, w.shape[axis]), axis=axis))
    return np.concatenate([lo, inner, hi], axis=axis)


def laplacian_weighted(f: np.ndarray, w: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Flux-form ``sum_i d_i (w d_i f)``.

    Fluxes live on faces, so the discrete operator is symmetric and discrete
    integration by parts is exact.  ``w`` must be strictly positive.
    """
    f = grid.check(f)
    w = grid.check(np.asarray(w, dtype=float), "weight")
    if not np.all(w > 0):
        raise DomainError("laplacian weight must be strictly positive")
    out = np.zeros(f.shape, dtype=np.result_type(f, np.float64))
    for ax in range(grid.dim):
        h = grid.spacing[ax]
        wf = face_average(w, grid, ax)
        if grid.periodic:
            flux = wf * (np.roll(f, -1, axis=ax) - f) / h
            out += (flux - np.roll(flux, 1, axis=ax)) / h
        else:
            pad = [(0, 0)] * f.ndim
            pad[ax] = (1, 1)
            fp = np.pad(f, pad)
            flux = wf * np.diff(fp, axis=ax) / h
            out += np.diff(flux, axis=ax) / h
    return out


def integrate(f: np.ndarray, grid: SpatialGrid):
    """Riemann sum (equal to the trapezoid rule for wall-vanishing or periodic fields)."""
    return np.sum(grid.check(f)) * grid.cell_volume


def inner_product(phi: np.ndarray, psi: np.ndarray, grid: SpatialGrid) -> complex:
    """``<phi, psi> = sum conj(phi) psi dV``."""
    phi = grid.check(phi, "phi")
    psi = grid.check(psi, "psi")
    return complex(np.vdot(phi, psi) * grid.cell_volume)


def norm(psi: np.ndarray, grid: SpatialGrid) -> float:
    return float(np.sqrt(inner_product(psi, psi, grid).real))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance between two histograms (each normalized first)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ConfigurationError("histograms must have matching shapes")
    sp, sq = p.sum(), q.sum()
    if sp <= 0 or sq <= 0:
        raise ConfigurationError("histograms must have positive mass")
    return 0.5 * float(np.abs(p / sp - q / sq).sum())


def cell_mass_cdf(rho: np.ndarray, grid: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Cell edges and cumulative mass of a 1D density treated as piecewise constant on node cells."""
    rho = grid.check(rho)
    if grid.dim != 1:
        raise ConfigurationError("cell_mass_cdf is one-dimensional")
    h = grid.spacing[0]
    x = grid.axes[0]
    edges = np.concatenate(([x[0] - h / 2], x + h / 2))
    cdf = np.concatenate(([0.0], np.cumsum(rho) * h))
    return edges, cdf


def density_bin_masses(rho: np.ndarray, grid: SpatialGrid, bin_edges: np.ndarray) -> np.ndarray:
    """Mass of a 1D grid density inside each histogram bin (cellwise-constant model)."""
    edges, cdf = cell_mass_cdf(rho, grid)
    at = np.interp(bin_edges, edges, cdf)
    return np.diff(at)


def _cell_index(x: np.ndarray, x0: float, h: float, m: int, periodic: bool):
    s = (x - x0) / h
    j = np.floor(s)
    if periodic:
        f = s - j
        j = np.mod(j.astype(np.int64), m)
        return j, np.mod(j + 1, m), f
    j = np.clip(j, 0, m - 2)
    return j.astype(np.int64), j.astype(np.int64) + 1, s - j


def interpolate(field: np.ndarray, grid: SpatialGrid, q) -> np.ndarray:
    """(Bi)linear interpolation of a grid field at points ``q``.

    ``q`` has shape ``(n,)`` in 1D or ``(n, 2)`` in 2D.  Uses the same cell
    convention as the particle kernels: periodic grids wrap, wall grids
    clamp to the first/last cell.
    """
    field = grid.check(field)
    q = np.asarray(q, dtype=float)
    if grid.dim == 1:
        q = q.reshape(-1)
        x0, h, m = grid.axes[0][0], grid.spacing[0], grid.shape[0]
        j, j1, f = _cell_index(q, x0, h, m, grid.periodic)
        return field[j] + (field[j1] - field[j]) * f
    q = q.reshape(-1, 2)
    jx, jx1, fx = _cell_index(q[:, 0], grid.axes[0][0], grid.spacing[0], grid.shape[0], grid.periodic)
    jy, jy1, fy = _cell_index(q[:, 1], grid.axes[1][0], grid.spacing[1], grid.shape[1], grid.periodic)
    lo = field[jx, jy] + (field[jx1, jy] - field[jx, jy]) * fx
    hi = field[jx, jy1] + (field[jx1, jy1] - field[jx, jy1]) * fx
    return lo + (hi - lo) * fy
