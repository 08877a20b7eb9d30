"""Ensemble averages of the actual (branch-signed) particle quantities versus
quantum expectation values on the same grid.

Monte Carlo errors use 32 batch means over trajectory index.  The quantum
side is always computed with the finite-difference stencils of the solver,
so discretization bias cancels to leading order.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .action import HamiltonianSpec
from .errors import ConfigurationError, EmptyEnsembleError, NumericalError
from .numerics import gradient, inner_product, integrate
from .solver import build_hamiltonian, kinetic_momentum
from .trajectories import EnsembleResult, Snapshot

BATCHES = 32
IMAG_TOL = 1e-8


def batch_means(x: np.ndarray, batches: int = BATCHES) -> tuple[float, float]:
    """Mean and its standard error from contiguous batch means."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise EmptyEnsembleError("no samples")
    mean = float(x.mean())
    if n == 1:
        return mean, float("nan")
    if n < 2 * batches:
        return mean, float(x.std(ddof=1) / np.sqrt(n))
    means = np.array([b.mean() for b in np.array_split(x, batches)])
    return mean, float(means.std(ddof=1) / np.sqrt(batches))


def _z(diff: float, se: float) -> float:
    if se > 0:
        return abs(diff) / se
    return 0.0 if abs(diff) <= 1e-8 else float("inf")


@dataclass
class ObservableReport:
    name: str
    ensemble: float
    mc_error: float
    quantum: float
    z: float
    n: int
    time: float
    analytic: float | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, name, samples, quantum, snap: Snapshot, analytic=None, **extra) -> "ObservableReport":
        mean, se = batch_means(samples)
        return cls(name, mean, se, float(quantum), _z(mean - quantum, se), int(np.size(samples)), float(snap.time),
                   None if analytic is None else float(analytic), dict(extra))

    def to_dict(self) -> dict:
        return asdict(self)


def _snapshot(result: EnsembleResult, snapshot) -> Snapshot:
    if isinstance(snapshot, Snapshot):
        snap = snapshot
    else:
        if result.n == 0 or not result.snapshots:
            raise EmptyEnsembleError("ensemble is empty")
        snap = result.snapshots[snapshot]
    if not snap.live.any():
        raise EmptyEnsembleError("no live trajectories in snapshot")
    return snap


def _coords(snap: Snapshot) -> list[np.ndarray]:
    q = snap.live_positions()
    return [q[:, ax] for ax in range(q.shape[1])]


def _momenta(snap: Snapshot) -> np.ndarray:
    p = snap.momenta[snap.live]
    if not np.all(np.isfinite(p)):
        raise EmptyEnsembleError("momentum records missing for live trajectories")
    return p


def _psi(snap: Snapshot):
    return snap.wavefunction.psi, snap.wavefunction.grid, snap.wavefunction.lambda_mag


def _p_psi(snap: Snapshot, axis: int) -> np.ndarray:
    psi, grid, lam = _psi(snap)
    return -1j * lam * gradient(psi, grid, axis)


def mean_position_function(result: EnsembleResult, f: Callable, snapshot=-1, name: str = "f(q)") -> ObservableReport:
    """Ensemble mean of ``f(q)`` against ``integral f |psi|^2``."""
    snap = _snapshot(result, snapshot)
    grid = snap.wavefunction.grid
    samples = np.broadcast_to(np.asarray(f(*_coords(snap)), dtype=float), (int(snap.live.sum()),))
    quantum = integrate(np.broadcast_to(f(*grid.mesh()), grid.shape) * snap.hydro.rho, grid)
    return ObservableReport.build(name, samples, quantum, snap)


def position_variance(result: EnsembleResult, snapshot=-1, axis: int = 0, analytic=None) -> ObservableReport:
    snap = _snapshot(result, snapshot)
    grid = snap.wavefunction.grid
    q = _coords(snap)[axis]
    mesh = grid.mesh()[axis]
    mq = integrate(mesh * snap.hydro.rho, grid)
    quantum = integrate((mesh - mq) ** 2 * snap.hydro.rho, grid)
    return ObservableReport.build(f"var_q{axis}", (q - q.mean()) ** 2, quantum, snap, analytic)


def mean_momentum(result: EnsembleResult, snapshot=-1, axis: int = 0, analytic=None) -> ObservableReport:
    """Ensemble mean of the actual momentum against ``Re <psi| -i lambda d |psi>``."""
    snap = _snapshot(result, snapshot)
    psi, grid, _ = _psi(snap)
    val = inner_product(psi, _p_psi(snap, axis), grid)
    if abs(val.imag) > IMAG_TOL:
        raise NumericalError("momentum expectation has an imaginary part", residual=abs(val.imag))
    return ObservableReport.build(f"p{axis}", _momenta(snap)[:, axis], val.real, snap, analytic, imag=abs(val.imag))


def _quantum_p2(snap: Snapshot, axis: int) -> float:
    psi, grid, lam = _psi(snap)
    pi = kinetic_momentum(grid, lam, axis)
    face = pi @ psi.ravel()
    return float(np.vdot(face, face).real * grid.cell_volume)


def mean_quadratic_momentum(result: EnsembleResult, d: float = 0.0, snapshot=-1, axis: int = 0, analytic=None) -> ObservableReport:
    """Ensemble ``<(p - d)^2>`` against ``<psi|(p - d)^2|psi>`` (flux-form ``p^2``)."""
    snap = _snapshot(result, snapshot)
    psi, grid, _ = _psi(snap)
    p1 = inner_product(psi, _p_psi(snap, axis), grid).real
    quantum = _quantum_p2(snap, axis) - 2 * d * p1 + d**2
    p = _momenta(snap)[:, axis]
    return ObservableReport.build(f"(p{axis}-d)^2", (p - d) ** 2, quantum, snap, analytic, d=float(d))


def momentum_variance(result: EnsembleResult, snapshot=-1, axis: int = 0, analytic=None) -> ObservableReport:
    snap = _snapshot(result, snapshot)
    psi, grid, _ = _psi(snap)
    p1 = inner_product(psi, _p_psi(snap, axis), grid).real
    quantum = _quantum_p2(snap, axis) - p1**2
    p = _momenta(snap)[:, axis]
    return ObservableReport.build(f"var_p{axis}", (p - p.mean()) ** 2, quantum, snap, analytic)


def momentum_components(result: EnsembleResult, snapshot=-1, axis: int = 0) -> dict[str, ObservableReport]:
    """Pieces of ``<p^2>``: the signed osmotic mean, the cross term, and the two squares.

    The signed osmotic mean and the cross term vanish on average because the
    branch sign is independent of position.
    """
    snap = _snapshot(result, snapshot)
    live = snap.live
    s = snap.phase_momentum[live, axis]
    u = snap.osmotic_momentum[live, axis]
    sign = snap.signs[live]
    rho, grid = snap.hydro.rho, snap.hydro.grid
    f = snap.hydro.filled()
    s_q = f.s_grad[axis]
    u_q = 0.5 * snap.hydro.lambda_mag * f.rho_grad_ratio[axis]
    return {
        "osmotic_signed": ObservableReport.build("osmotic_signed", sign * u, 0.0, snap),
        "cross": ObservableReport.build("cross", 2 * sign * u * s, 0.0, snap),
        "phase_sq": ObservableReport.build("phase_sq", s**2, integrate(rho * s_q**2, grid), snap),
        "osmotic_sq": ObservableReport.build("osmotic_sq", u**2, integrate(rho * u_q**2, grid), snap),
    }


def _hamiltonian_for(result: EnsembleResult, spec: HamiltonianSpec):
    cache = result.__dict__.setdefault("_ham_cache", {})
    key = id(spec)
    if key not in cache:
        cache[key] = (spec, build_hamiltonian(spec, result.setup.grid, result.setup.params.lambda_mag))
    return cache[key][1]


def particle_energy(q: list[np.ndarray], p: np.ndarray, spec: HamiltonianSpec) -> np.ndarray:
    h = spec.potential_at(*q)
    for ax in range(len(q)):
        h = h + 0.5 * spec.metric_at(ax, *q) * (p[:, ax] - spec.vector_potential_at(ax, *q)) ** 2
    return h


def mean_energy(result: EnsembleResult, spec: HamiltonianSpec | None = None, snapshot=-1, analytic=None) -> ObservableReport:
    """Ensemble mean of ``H(q, p)`` on the actual momenta against ``<psi|H|psi>``."""
    spec = result.setup.spec if spec is None else spec
    snap = _snapshot(result, snapshot)
    ham = _hamiltonian_for(result, spec)
    samples = particle_energy(_coords(snap), _momenta(snap), spec)
    return ObservableReport.build("energy", samples, ham.expectation(snap.wavefunction.psi), snap, analytic)


def mean_angular_momentum_2d(result: EnsembleResult, snapshot=-1, analytic=None) -> ObservableReport:
    """Ensemble ``q_x p_y - q_y p_x`` against ``<psi| x p_y - y p_x |psi>``."""
    snap = _snapshot(result, snapshot)
    psi, grid, _ = _psi(snap)
    if grid.dim != 2:
        raise ConfigurationError("angular momentum needs a two-dimensional scenario")
    x, y = grid.mesh()
    op = x * _p_psi(snap, 1) - y * _p_psi(snap, 0)
    val = inner_product(psi, op, grid)
    qx, qy = _coords(snap)
    p = _momenta(snap)
    return ObservableReport.build("L", qx * p[:, 1] - qy * p[:, 0], val.real, snap, analytic, imag=abs(val.imag))


@dataclass
class DiscrepancyReport:
    ensemble: float
    mc_error: float
    quantum: float
    model_quadrature: float
    gap: float
    expected_gap: float
    z_gap: float
    z_model: float
    inconclusive: bool
    n: int
    time: float
    oracle: dict = field(default_factory=dict)

    @property
    def significant(self) -> bool:
        return not self.inconclusive and self.z_gap >= 5.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["significant"] = self.significant
        return out


def p3_discrepancy(result: EnsembleResult, snapshot=-1, oracle: dict | None = None, threshold: float = 5.0) -> DiscrepancyReport:
    """Compare the ensemble ``<p^3>`` with ``<psi|p^3|psi>`` (1D).

    ``model_quadrature`` is the grid value the ensemble should converge to,
    ``integral rho (S'^3 + 3 S' u^2)`` with ``u = (lambda/2) rho'/rho``.
    The report is flagged inconclusive when that expected gap is within
    ``threshold`` Monte Carlo errors of zero.
    """
    snap = _snapshot(result, snapshot)
    psi, grid, _ = _psi(snap)
    if grid.dim != 1:
        raise ConfigurationError("p3_discrepancy is one-dimensional")
    pp = _p_psi(snap, 0)
    quantum = inner_product(pp, -1j * snap.wavefunction.lambda_mag * gradient(pp, grid, 0), grid).real
    f = snap.hydro.filled()
    s = f.s_grad[0]
    u = 0.5 * snap.hydro.lambda_mag * f.rho_grad_ratio[0]
    model = integrate(snap.hydro.rho * (s**3 + 3 * s * u**2), grid)
    p = _momenta(snap)[:, 0]
    mean, se = batch_means(p**3)
    gap = mean - quantum
    expected = model - quantum
    return DiscrepancyReport(
        ensemble=mean, mc_error=se, quantum=float(quantum), model_quadrature=float(model),
        gap=float(gap), expected_gap=float(expected), z_gap=_z(gap, se), z_model=_z(mean - model, se),
        inconclusive=bool(abs(expected) < threshold * se), n=int(p.size), time=float(snap.time),
        oracle=dict(oracle or {}),
    )


@dataclass
class UncertaintyReport:
    bound: float
    var_q: float
    var_p: float
    osmotic_sq: float
    product: float
    product_se: float
    product_osmotic: float
    product_osmotic_se: float
    chain_gap: float
    chain_gap_se: float
    quantum_product: float
    n: int
    time: float
    tolerance_sigmas: float = 4.0

    @property
    def position_osmotic_holds(self) -> bool:
        return self.product_osmotic >= self.bound - self.tolerance_sigmas * self.product_osmotic_se

    @property
    def product_holds(self) -> bool:
        return self.product >= self.bound - self.tolerance_sigmas * self.product_se

    @property
    def chain_holds(self) -> bool:
        return self.chain_gap >= -self.tolerance_sigmas * self.chain_gap_se

    @property
    def all_hold(self) -> bool:
        return self.position_osmotic_holds and self.product_holds and self.chain_holds

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(position_osmotic_holds=self.position_osmotic_holds, product_holds=self.product_holds,
                   chain_holds=self.chain_holds, all_hold=self.all_hold)
        return out


def uncertainty_report(result: EnsembleResult, snapshot=-1, axis: int = 0) -> UncertaintyReport:
    """Three lower bounds along one axis.

    ``<(q - <q>)^2> <u^2> >= lambda^2/4`` where ``u = m qdot - dS`` is the
    osmotic momentum, ``Var(q) Var(p) >= lambda^2/4``, and
    ``Var(p) >= <u^2>``.  Errors come from the spread of per-batch estimates.
    """
    snap = _snapshot(result, snapshot)
    live = snap.live
    q = snap.live_positions()[:, axis]
    p = snap.momenta[live, axis]
    u = snap.osmotic_momentum[live, axis]
    lam = snap.wavefunction.lambda_mag

    def stats(qb, pb, ub):
        vq, vp, uu = qb.var(), pb.var(), np.mean(ub**2)
        return vq * vp, vq * uu, vp - uu

    full = stats(q, p, u)
    k = BATCHES if q.size >= 2 * BATCHES else max(q.size, 1)
    per = np.array([stats(a, b, c) for a, b, c in zip(np.array_split(q, k), np.array_split(p, k), np.array_split(u, k))])
    se = per.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.full(3, np.nan)
    mom = momentum_variance(result, snap, axis)
    var_q = position_variance(result, snap, axis)
    return UncertaintyReport(
        bound=lam**2 / 4, var_q=float(q.var()), var_p=float(p.var()), osmotic_sq=float(np.mean(u**2)),
        product=float(full[0]), product_se=float(se[0]), product_osmotic=float(full[1]),
        product_osmotic_se=float(se[1]), chain_gap=float(full[2]), chain_gap_se=float(se[2]),
        quantum_product=float(var_q.quantum * mom.quantum), n=int(q.size), time=float(snap.time),
    )


def write_suite_csv(reports: list[ObservableReport], path, scenario: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["observable", "ensemble", "mc_err", "quantum", "z"]
        w.writerow((["scenario"] if scenario is not None else []) + head)
        for r in reports:
            row = [r.name, repr(r.ensemble), repr(r.mc_error), repr(r.quantum), repr(r.z)]
            w.writerow(([scenario] if scenario is not None else []) + row)


def reports_json(reports, path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
