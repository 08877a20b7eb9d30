"""Crank-Nicolson propagation of ``i lambda dpsi/dt = H psi``.

The discrete Hamiltonian is assembled in flux form,
``H = 1/2 Pi^dagger G Pi + V`` with the kinetic momentum
``Pi = -i lambda D_+ - a M`` mapping node values to face values
(``D_+`` a forward difference, ``M`` the face average, ``G`` the metric
on faces).  It is Hermitian by construction for any positive metric and
any real vector potential.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .action import HamiltonianSpec
from .errors import ConfigurationError, DomainError, NumericalError
from .numerics import SpatialGrid, inner_product, norm

NORM_TOL = 1e-10


@dataclass
class WaveFunction:
    psi: np.ndarray
    grid: SpatialGrid
    time: float = 0.0
    lambda_mag: float = 1.0

    def __post_init__(self):
        self.psi = np.asarray(self.grid.check(self.psi, "psi"), dtype=np.complex128)
        if not np.all(np.isfinite(self.psi)):
            raise NumericalError("wave function has non-finite values")
        if not self.lambda_mag > 0:
            raise DomainError("lambda_mag must be > 0")

    @property
    def norm(self) -> float:
        return norm(self.psi, self.grid)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def normalized(self) -> "WaveFunction":
        n = self.norm
        if n == 0:
            raise NumericalError("cannot normalize a zero wave function")
        return replace(self, psi=self.psi / n)

    def energy(self, ham: "DiscreteHamiltonian") -> float:
        return ham.expectation(self.psi)

    def copy(self) -> "WaveFunction":
        return replace(self, psi=self.psi.copy())

    def metadata(self, ham: "DiscreteHamiltonian | None" = None) -> dict:
        out = {
            "time": float(self.time),
            "norm": float(self.norm),
            "lambda_mag": float(self.lambda_mag),
            "grid": self.grid.to_dict(),
        }
        if ham is not None:
            out["energy"] = float(self.energy(ham))
        return out

    def to_csv(self, path) -> None:
        """Write ``q..., re_psi, im_psi`` rows (one per grid node)."""
        coords = [c.ravel() for c in self.grid.mesh()]
        names = ["q"] if self.grid.dim == 1 else ["qx", "qy"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["re_psi", "im_psi"])
            for row in zip(*coords, self.psi.real.ravel(), self.psi.imag.ravel()):
                w.writerow([repr(float(x)) for x in row])

    def to_json(self, path, ham: "DiscreteHamiltonian | None" = None) -> None:
        Path(path).write_text(json.dumps(self.metadata(ham), indent=2, sort_keys=True))


def _forward_difference(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    """Nodes to faces: ``(f[k] - f[k-1]) / h``.

    Dirichlet: ``n + 1`` faces with zero ghosts; periodic: ``n`` faces,
    face ``k`` sitting between nodes ``k`` and ``k + 1``.
    """
    if periodic:
        d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
        d[n - 1, 0] = 1.0
        return d.tocsr() / h
    return sp.diags([np.ones(n), -np.ones(n)], [0, -1], shape=(n + 1, n), format="csr") / h


def _face_mean(n: int, periodic: bool) -> sp.csr_matrix:
    if periodic:
        m = sp.diags([np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
        m[n - 1, 0] = 1.0
        return m.tocsr() * 0.5
    return sp.diags([np.ones(n), np.ones(n)], [0, -1], shape=(n + 1, n), format="csr") * 0.5


def _axis_operator(op1d: sp.spmatrix, grid: SpatialGrid, axis: int) -> sp.csr_matrix:
    if grid.dim == 1:
        return sp.csr_matrix(op1d)
    eye = [sp.identity(n, format="csr") for n in grid.shape]
    parts = [op1d if ax == axis else eye[ax] for ax in range(grid.dim)]
    return sp.csr_matrix(sp.kron(parts[0], parts[1]))


def _face_coords(grid: SpatialGrid, axis: int) -> tuple[np.ndarray, ...]:
    axes = list(grid.axes)
    axes[axis] = grid.faces(axis)
    return tuple(np.meshgrid(*axes, indexing="ij"))


def kinetic_momentum(grid: SpatialGrid, lambda_mag: float, axis: int = 0, spec: HamiltonianSpec | None = None):
    """``Pi = -i lambda D_+ - a M`` along one axis, as a sparse nodes-to-faces map."""
    d = _axis_operator(_forward_difference(grid.shape[axis], grid.spacing[axis], grid.periodic), grid, axis)
    pi = -1j * lambda_mag * d
    if spec is not None and spec.has_vector_potential:
        a = spec.vector_potential_at(axis, *_face_coords(grid, axis)).ravel()
        m = _axis_operator(_face_mean(grid.shape[axis], grid.periodic), grid, axis)
        pi = pi - sp.diags(a) @ m
    return sp.csr_matrix(pi)


@dataclass
class DiscreteHamiltonian:
    matrix: sp.csr_matrix
    grid: SpatialGrid
    lambda_mag: float
    spec: HamiltonianSpec | None = None
    _bands: tuple | None = field(default=None, repr=False)
    _propagators: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = int(np.prod(self.grid.shape))
        if self.matrix.shape != (n, n):
            raise ConfigurationError("Hamiltonian size does not match the grid")
        if self.grid.dim == 1 and not self.grid.periodic and self._bands is None:
            m = self.matrix
            self._bands = tuple(np.asarray(m.diagonal(k), dtype=np.complex128) for k in (-1, 0, 1))

    @property
    def tridiagonal(self) -> bool:
        return self._bands is not None

    @property
    def bands(self):
        return self._bands

    def apply(self, psi: np.ndarray) -> np.ndarray:
        psi = self.grid.check(psi, "psi")
        return (self.matrix @ psi.ravel()).reshape(self.grid.shape)

    def expectation(self, psi: np.ndarray) -> float:
        return inner_product(psi, self.apply(psi), self.grid).real / inner_product(psi, psi, self.grid).real

    def hermiticity_defect(self, phi: np.ndarray, psi: np.ndarray) -> float:
        a = inner_product(phi, self.apply(psi), self.grid)
        b = inner_product(psi, self.apply(phi), self.grid)
        return abs(a - np.conj(b)) / (norm(phi, self.grid) * norm(psi, self.grid))

    def propagator(self, dt: float) -> "CrankNicolson":
        key = float(dt)
        if key not in self._propagators:
            self._propagators[key] = CrankNicolson(self, key)
        return self._propagators[key]


def build_hamiltonian(spec: HamiltonianSpec, grid: SpatialGrid, lambda_mag: float = 1.0) -> DiscreteHamiltonian:
    """Discrete ``1/2 (p - a) g (p - a) + V`` with ``p = -i lambda d``.

    The metric is evaluated on faces, so a position-dependent ``g`` is
    sandwiched between the two momentum factors.
    """
    if not lambda_mag > 0:
        raise DomainError("lambda_mag must be > 0")
    spec.validate(grid)
    h = sp.csr_matrix((grid.points[0] * (grid.points[1] if grid.dim == 2 else 1),) * 2, dtype=np.complex128)
    for ax in range(grid.dim):
        g = spec.metric_at(ax, *_face_coords(grid, ax)).ravel()
        if not np.all(g > 0):
            raise DomainError("metric g must be strictly positive")
        pi = kinetic_momentum(grid, lambda_mag, ax, spec)
        h = h + 0.5 * (pi.conj().T @ sp.diags(g) @ pi)
    v = spec.potential_at(*grid.mesh()).ravel()
    h = sp.csr_matrix(h + sp.diags(v.astype(np.complex128)))
    h.sum_duplicates()
    return DiscreteHamiltonian(h, grid, float(lambda_mag), spec)


def sandwich_operator(grid: SpatialGrid, weight, lambda_mag: float = 1.0) -> sp.csr_matrix:
    """``p B(q) p`` in flux form, with ``B`` evaluated on faces (1D)."""
    if grid.dim != 1:
        raise ConfigurationError("sandwich_operator is one-dimensional")
    pi = kinetic_momentum(grid, lambda_mag)
    b = np.asarray(weight(grid.faces(0)), dtype=float)
    return sp.csr_matrix(pi.conj().T @ sp.diags(b) @ pi)


def momentum_squared(grid: SpatialGrid, lambda_mag: float = 1.0) -> sp.csr_matrix:
    return sandwich_operator(grid, np.ones_like, lambda_mag)


def position_operator(grid: SpatialGrid, f) -> sp.csr_matrix:
    return sp.diags(np.asarray(f(*grid.mesh()), dtype=float).ravel()).tocsr()


def ordering_defect(psi: np.ndarray, grid: SpatialGrid, lambda_mag: float = 1.0) -> np.ndarray:
    """``[p q^2 p - (p^2 q^2 + q^2 p^2) / 2] psi`` on a 1D grid."""
    pqp = sandwich_operator(grid, np.square, lambda_mag)
    p2 = momentum_squared(grid, lambda_mag)
    q2 = position_operator(grid, np.square)
    x = grid.check(psi, "psi").astype(np.complex128)
    return pqp @ x - 0.5 * (p2 @ (q2 @ x) + q2 @ (p2 @ x))


class CrankNicolson:
    """Cayley propagator ``(1 + i beta H)^{-1} (1 - i beta H)``, ``beta = dt / 2 lambda``.

    Tridiagonal Hamiltonians (1D, walls) use the compiled Thomas solve;
    everything else uses a sparse LU factorization.  The linear-solve
    residual is checked every ``check_every`` steps.
    """

    def __init__(self, ham: DiscreteHamiltonian, dt: float, check_every: int = 64, tol: float = 1e-9):
        if not dt > 0:
            raise DomainError("dt must be > 0")
        self.ham = ham
        self.dt = float(dt)
        self.check_every = int(check_every)
        self.tol = tol
        self._count = 0
        beta = self.dt / (2 * ham.lambda_mag)
        n = ham.matrix.shape[0]
        eye = sp.identity(n, dtype=np.complex128, format="csr")
        self.a = sp.csr_matrix(eye + 1j * beta * ham.matrix)
        self.b = sp.csr_matrix(eye - 1j * beta * ham.matrix)
        if ham.tridiagonal:
            lo, di, up = ham.bands
            self._b_bands = (-1j * beta * lo, 1 - 1j * beta * di, -1j * beta * up)
            self._factor = kernels.tridiag_factor(1j * beta * lo, 1 + 1j * beta * di, 1j * beta * up)
            self._lu = None
        else:
            try:
                self._lu = splu(self.a.tocsc())
            except RuntimeError as exc:
                raise NumericalError(f"Crank-Nicolson factorization failed: {exc}") from exc

    def residual(self, psi: np.ndarray, new: np.ndarray) -> float:
        rhs = self.b @ psi
        scale = max(np.linalg.norm(rhs), 1e-300)
        return float(np.linalg.norm(self.a @ new - rhs) / scale)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        flat = np.ascontiguousarray(psi.ravel(), dtype=np.complex128)
        if self._lu is None:
            out = kernels.cn_tridiag_step(self._factor, *self._b_bands, flat)
        else:
            out = self._lu.solve(self.b @ flat)
        self._count += 1
        due = self.check_every and self._count % self.check_every == 0
        if due or not np.isfinite(out[0]):
            res = self.residual(flat, out)
            if not np.isfinite(res) or res > self.tol:
                raise NumericalError("Crank-Nicolson linear solve failed", residual=res)
        return np.asarray(out).reshape(psi.shape)


def step(wf: WaveFunction, ham: DiscreteHamiltonian, dt: float) -> WaveFunction:
    _check_pair(wf, ham)
    return replace(wf, psi=ham.propagator(dt).apply(wf.psi), time=wf.time + dt)


def _steps_for(t: float, dt: float, what: str) -> int:
    k = int(round(t / dt))
    if k < 0 or abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ConfigurationError(f"{what}={t} is not a non-negative multiple of dt={dt}")
    return k


def _check_pair(wf: WaveFunction, ham: DiscreteHamiltonian) -> None:
    if wf.grid != ham.grid:
        raise ConfigurationError("wave function and Hamiltonian live on different grids")
    if abs(wf.lambda_mag - ham.lambda_mag) > 1e-15 * ham.lambda_mag:
        raise ConfigurationError("wave function and Hamiltonian use different lambda")


def evolve(wf: WaveFunction, ham: DiscreteHamiltonian, t_final: float, dt: float, snapshot_times=None):
    """Propagate to ``wf.time + t_final``; return snapshots at the requested offsets.

    Snapshot offsets must be multiples of ``dt`` in ``[0, t_final]``; with
    none requested only the final state is returned.  Snapshot times are
    ``wf.time + k dt`` (no accumulated rounding).
    """
    _check_pair(wf, ham)
    if not dt > 0:
        raise DomainError("dt must be > 0")
    total = _steps_for(t_final, dt, "t_final")
    if snapshot_times is None:
        wanted = {total}
    else:
        wanted = {_steps_for(t, dt, "snapshot time") for t in snapshot_times}
        if any(k > total for k in wanted):
            raise ConfigurationError("snapshot times must lie within [0, t_final]")
    out = []
    if 0 in wanted:
        out.append(wf.copy())
    if total == 0:
        return out
    prop = ham.propagator(dt)
    psi = wf.psi
    for k in range(1, total + 1):
        psi = prop.apply(psi)
        if k in wanted:
            out.append(replace(wf, psi=psi.copy(), time=wf.time + k * dt))
    return out


def iterate_states(wf: WaveFunction, ham: DiscreteHamiltonian, n_steps: int, dt: float):
    """Yield ``(k, psi_k)`` for ``k = 0..n_steps`` (arrays are not copied)."""
    _check_pair(wf, ham)
    prop = ham.propagator(dt)
    psi = wf.psi
    yield 0, psi
    for k in range(1, n_steps + 1):
        psi = prop.apply(psi)
        yield k, psi
