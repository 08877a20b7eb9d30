"""Particle ensembles driven by the sign-switching velocity field.

Each particle carries a branch sign.  At every step it moves with
``v_B + sign * w`` (explicit Euler, fields frozen over the step and
interpolated linearly), then flips its sign with probability
``flip_prob``.  The wave function is propagated once and shared by all
particles.  All randomness is counter-based and keyed by trajectory index,
so blocks of particles can be advanced in any order or in parallel threads
and merge bit-identically.
"""
from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from . import kernels
from .action import HamiltonianSpec, StochasticParams
from .errors import ConfigurationError, DomainError
from .madelung import HydroFields, advection_fields, decompose
from .numerics import SpatialGrid, density_bin_masses, interpolate, total_variation
from .rng import Tag, stream_keys, uniforms_from_keys
from .solver import WaveFunction, build_hamiltonian, _steps_for

TERMINATION_WARNING = 0.10
HIST_BINS = 64


@dataclass
class EnsembleSetup:
    """Everything a run needs: Hamiltonian, grid, stochastic parameters, initial state."""

    spec: HamiltonianSpec
    grid: SpatialGrid
    params: StochasticParams
    initial: WaveFunction
    name: str = ""

    def __post_init__(self):
        if self.initial.grid != self.grid:
            raise ConfigurationError("initial state lives on a different grid")
        if abs(self.initial.lambda_mag - self.params.lambda_mag) > 1e-15 * self.params.lambda_mag:
            raise ConfigurationError("initial state and stochastic parameters disagree on lambda")
        self.spec.validate(self.grid)


def _as_setup(scenario) -> EnsembleSetup:
    if isinstance(scenario, EnsembleSetup):
        return scenario
    if hasattr(scenario, "setup"):
        return scenario.setup()
    raise ConfigurationError("expected an EnsembleSetup or a scenario with a setup() method")


def sample_initial(rho: np.ndarray, grid: SpatialGrid, n: int, seed: int, first_index: int = 0) -> np.ndarray:
    """Draw ``n`` positions from a grid density (cellwise constant, uniform jitter).

    Particle ``i`` uses the INIT stream of index ``first_index + i``: counter
    0 picks the cell, counters 1.. jitter each axis.  Returns shape ``(n,)``
    in 1D and ``(n, 2)`` in 2D.
    """
    if n < 1:
        raise ConfigurationError("need at least one particle")
    rho = grid.check(np.asarray(rho, dtype=float), "rho")
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise DomainError("rho must be finite and non-negative")
    cdf = np.cumsum(rho.ravel())
    if not cdf[-1] > 0:
        raise DomainError("rho has no mass")
    cdf /= cdf[-1]
    keys = stream_keys(seed, np.arange(first_index, first_index + n), Tag.INIT)
    u = uniforms_from_keys(keys, 0)
    flat = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    cells = np.unravel_index(flat, grid.shape)
    out = np.empty((n, grid.dim))
    for ax in range(grid.dim):
        h = grid.spacing[ax]
        x = grid.axes[ax][cells[ax]] + (uniforms_from_keys(keys, ax + 1) - 0.5) * h
        if grid.periodic:
            lo, hi = grid.extent[ax]
            x = lo + np.mod(x - lo, hi - lo)
        else:
            lo, hi = grid.node_range[ax]
            x = np.clip(x, lo, hi)
        out[:, ax] = x
    return out[:, 0] if grid.dim == 1 else out


@dataclass
class ParticleState:
    """Positions, branch signs and liveness of a block of trajectories at one step."""

    positions: np.ndarray
    signs: np.ndarray
    alive: np.ndarray
    indices: np.ndarray
    seed: int
    step: int = 0
    keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.keys = stream_keys(self.seed, self.indices, Tag.SIGN)

    @classmethod
    def initial(cls, rho: np.ndarray, grid: SpatialGrid, n: int, seed: int, first_index: int = 0) -> "ParticleState":
        idx = np.arange(first_index, first_index + n, dtype=np.int64)
        q = np.ascontiguousarray(sample_initial(rho, grid, n, seed, first_index))
        u = uniforms_from_keys(stream_keys(seed, idx, Tag.SIGN), 0)
        signs = np.where(u < 0.5, 1.0, -1.0)
        return cls(q, signs, np.ones(n, dtype=np.uint8), idx, seed)

    @property
    def n(self) -> int:
        return len(self.indices)

    def copy(self) -> "ParticleState":
        out = ParticleState(self.positions.copy(), self.signs.copy(), self.alive.copy(), self.indices.copy(), self.seed, self.step)
        return out


def _advance_block(state: ParticleState, lo: int, hi: int, vb, w, grid: SpatialGrid, dt: float, flip_prob: float):
    sl = slice(lo, hi)
    counter = state.step + 1
    if grid.dim == 1:
        kernels.advance_1d(
            state.positions[sl], state.signs[sl], state.alive[sl], vb[0], w[0],
            float(grid.axes[0][0]), float(grid.spacing[0]), grid.periodic, dt,
            state.keys[sl], counter, flip_prob,
        )
    else:
        kernels.advance_2d(
            state.positions[sl], state.signs[sl], state.alive[sl], vb[0], vb[1], w[0], w[1],
            float(grid.axes[0][0]), float(grid.axes[1][0]), float(grid.spacing[0]), float(grid.spacing[1]),
            grid.periodic, dt, state.keys[sl], counter, flip_prob,
        )


def advance(state: ParticleState, hydro: HydroFields, spec: HamiltonianSpec, params: StochasticParams,
            dt: float | None = None, workers: int = 1, block: int = 8192, osmotic: bool = True) -> ParticleState:
    """One explicit Euler step of every live particle, then the sign flips.

    Mutates and returns ``state``.  ``workers > 1`` advances disjoint blocks
    in threads (the compiled kernel releases the GIL); the result does not
    depend on ``workers`` or ``block``.  ``osmotic=False`` drops the branch
    term, giving the guidance-equation flow.
    """
    dt = params.dt if dt is None else dt
    vb, w = advection_fields(hydro, spec)
    if not osmotic:
        w = np.zeros_like(w)
    bounds = [(lo, min(lo + block, state.n)) for lo in range(0, state.n, block)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: _advance_block(state, *b, vb, w, hydro.grid, dt, params.flip_prob), bounds))
    else:
        for lo, hi in bounds:
            _advance_block(state, lo, hi, vb, w, hydro.grid, dt, params.flip_prob)
    state.step += 1
    return state


@dataclass
class Snapshot:
    time: float
    step: int
    positions: np.ndarray
    signs: np.ndarray
    alive: np.ndarray
    phase_momentum: np.ndarray
    osmotic_momentum: np.ndarray
    wavefunction: WaveFunction
    hydro: HydroFields
    hist_edges: list
    hist_counts: list
    hist_density: list
    tv: float

    @property
    def momenta(self) -> np.ndarray:
        """Actual momenta ``dS + sign (lambda/2) d rho / rho``, shape ``(n, dim)``."""
        return self.phase_momentum + self.signs[:, None] * self.osmotic_momentum

    @property
    def live(self) -> np.ndarray:
        return self.alive.astype(bool)

    @property
    def retained_fraction(self) -> float:
        return float(self.live.mean()) if self.alive.size else 0.0

    def live_positions(self) -> np.ndarray:
        q = self.positions[self.live]
        return q[:, None] if q.ndim == 1 else q


@dataclass
class EnsembleResult:
    setup: EnsembleSetup
    n: int
    dt: float
    t_final: float
    snapshots: list[Snapshot]
    warnings: list[str] = field(default_factory=list)
    path_times: np.ndarray | None = None
    paths: np.ndarray | None = None

    @property
    def seed(self) -> int:
        return self.setup.params.seed

    @property
    def final_positions(self) -> np.ndarray:
        return self.snapshots[-1].positions

    @property
    def terminated_fraction(self) -> float:
        return 0.0 if self.n == 0 else 1.0 - self.snapshots[-1].retained_fraction

    def snapshot_at(self, time: float) -> Snapshot:
        for s in self.snapshots:
            if abs(s.time - time) <= 1e-9 * max(1.0, abs(time)):
                return s
        raise ConfigurationError(f"no snapshot at t={time}")

    def summary(self) -> dict:
        p = self.setup.params
        return {
            "scenario": self.setup.name,
            "seed": int(p.seed),
            "n": int(self.n),
            "dt": float(self.dt),
            "lambda_mag": float(p.lambda_mag),
            "flip_prob": float(p.flip_prob),
            "t_final": float(self.t_final),
            "terminated_fraction": float(self.terminated_fraction),
            "warnings": list(self.warnings),
            "snapshots": [
                {"time": float(s.time), "step": int(s.step), "tv": float(s.tv), "retained": s.retained_fraction}
                for s in self.snapshots
            ],
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True))

    def positions_csv(self, path) -> None:
        dim = self.setup.grid.dim
        names = ["q"] if dim == 1 else ["qx", "qy"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snapshot", "time", "index"] + names + ["sign", "alive"])
            for k, s in enumerate(self.snapshots):
                q = s.positions.reshape(len(s.signs), -1)
                for i in range(len(s.signs)):
                    w.writerow([k, repr(float(s.time)), i, *[repr(float(x)) for x in q[i]], int(s.signs[i]), int(s.alive[i])])

    def histogram_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snapshot", "time", "axis", "bin_lo", "bin_hi", "ensemble", "density"])
            for k, s in enumerate(self.snapshots):
                for ax, (edges, counts, dens) in enumerate(zip(s.hist_edges, s.hist_counts, s.hist_density)):
                    for b in range(len(counts)):
                        w.writerow([k, repr(float(s.time)), ax, repr(float(edges[b])), repr(float(edges[b + 1])),
                                    repr(float(counts[b])), repr(float(dens[b]))])


def _marginal_line(rho: np.ndarray, grid: SpatialGrid, axis: int) -> tuple[np.ndarray, SpatialGrid]:
    if grid.dim == 1:
        return rho, grid
    other = 1 - axis
    marg = rho.sum(axis=other) * grid.spacing[other]
    return marg, SpatialGrid((grid.extent[axis],), (grid.shape[axis],), grid.boundary)


def histogram_tv(positions: np.ndarray, alive: np.ndarray, rho: np.ndarray, grid: SpatialGrid, bins: int = HIST_BINS):
    """Per-axis marginal histograms of live particles against the grid density.

    Returns ``(edges, counts, density_masses, tv)``; counts are fractions of
    all particles (so they sum to the retained fraction) and ``tv`` is the
    largest per-axis TV distance after normalization.
    """
    q = positions.reshape(len(alive), -1)[alive.astype(bool)]
    edges_all, counts_all, dens_all, tvs = [], [], [], []
    for ax in range(grid.dim):
        lo, hi = grid.extent[ax] if grid.periodic else grid.node_range[ax]
        edges = np.linspace(lo, hi, bins + 1)
        counts = np.histogram(q[:, ax], edges)[0] / max(len(alive), 1)
        marg, line = _marginal_line(rho, grid, ax)
        dens = density_bin_masses(marg, line, edges)
        edges_all.append(edges)
        counts_all.append(counts)
        dens_all.append(dens)
        tvs.append(total_variation(counts, dens) if counts.sum() > 0 else 1.0)
    return edges_all, counts_all, dens_all, float(max(tvs))


def _record(state: ParticleState, wf: WaveFunction, hydro: HydroFields, bins: int) -> Snapshot:
    grid = wf.grid
    live = state.alive.astype(bool)
    filled = hydro.filled()
    q = state.positions
    phase = np.full((state.n, grid.dim), np.nan)
    osm = np.full((state.n, grid.dim), np.nan)
    if live.any():
        ql = q[live]
        for ax in range(grid.dim):
            phase[live, ax] = interpolate(filled.s_grad[ax], grid, ql)
            osm[live, ax] = 0.5 * hydro.lambda_mag * interpolate(filled.rho_grad_ratio[ax], grid, ql)
    edges, counts, dens, tv = histogram_tv(q, state.alive, hydro.rho, grid, bins) if state.n else ([], [], [], float("nan"))
    return Snapshot(wf.time, state.step, q.copy(), state.signs.copy(), state.alive.copy(), phase, osm,
                    wf.copy(), hydro, edges, counts, dens, tv)


def run_ensemble(scenario, n: int, t_final: float, snapshot_times=None, workers: int = 1,
                 record_paths: bool = False, path_stride: int = 1, bins: int = HIST_BINS,
                 dt: float | None = None, osmotic: bool = True) -> EnsembleResult:
    """Evolve the wave function once and ``n`` trajectories against it.

    Snapshots are taken at ``snapshot_times`` (default: ``0`` and
    ``t_final``), each a multiple of ``dt``.  With ``record_paths`` the
    positions of every particle are stored every ``path_stride`` steps.
    """
    setup = _as_setup(scenario)
    params = setup.params
    dt = params.dt if dt is None else float(dt)
    total = _steps_for(t_final, dt, "t_final")
    times = [0.0, t_final] if snapshot_times is None else list(snapshot_times)
    wanted = {_steps_for(t, dt, "snapshot time") for t in times}
    if any(k > total for k in wanted):
        raise ConfigurationError("snapshot times must lie within [0, t_final]")
    if n < 0:
        raise ConfigurationError("n must be >= 0")
    ham = build_hamiltonian(setup.spec, setup.grid, params.lambda_mag)
    prop = ham.propagator(dt)
    wf = setup.initial.copy()
    t0 = wf.time
    hydro = decompose(wf)
    if n > 0:
        state = ParticleState.initial(hydro.rho, setup.grid, n, params.seed)
    else:
        state = ParticleState(np.empty((0,) if setup.grid.dim == 1 else (0, 2)), np.empty(0), np.empty(0, np.uint8),
                              np.empty(0, np.int64), params.seed)
    snaps: list[Snapshot] = []
    path_t, paths = [], []
    for k in range(total + 1):
        if k > 0:
            wf = wf.__class__(prop.apply(wf.psi), wf.grid, t0 + k * dt, wf.lambda_mag)
            hydro = decompose(wf)
        if k in wanted:
            snaps.append(_record(state, wf, hydro, bins))
        if record_paths and k % path_stride == 0:
            path_t.append(wf.time)
            paths.append(state.positions.copy())
        if k < total and n > 0:
            advance(state, hydro, setup.spec, params, dt, workers=workers, osmotic=osmotic)
    result = EnsembleResult(setup, n, dt, float(t_final), snaps)
    if record_paths:
        result.path_times = np.asarray(path_t)
        result.paths = np.stack(paths)
    if n > 0 and result.terminated_fraction > TERMINATION_WARNING:
        msg = f"{100 * result.terminated_fraction:.1f}% of trajectories left the domain; enlarge the grid"
        result.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return result


@dataclass
class ReferencePaths:
    times: np.ndarray
    positions: np.ndarray
    node_flag: np.ndarray
    alive: np.ndarray


def bohmian_reference(scenario, q0, t_final: float, dt: float | None = None) -> ReferencePaths:
    """Noise-free paths along the guidance velocity ``g (dS - a)`` from given starts.

    Uses the same Euler scheme and interpolation as the ensemble.  Particles
    that touch a node-masked cell get the nearest-unmasked velocity and are
    flagged in ``node_flag``.
    """
    setup = _as_setup(scenario)
    params = setup.params
    dt = params.dt if dt is None else float(dt)
    total = _steps_for(t_final, dt, "t_final")
    grid = setup.grid
    q = np.ascontiguousarray(np.array(q0, dtype=float).reshape(-1) if grid.dim == 1 else np.array(q0, dtype=float).reshape(-1, 2))
    n = len(q)
    if not np.all(grid.contains(q)):
        raise DomainError("reference starting points must lie on the grid")
    state = ParticleState(q, np.ones(n), np.ones(n, np.uint8), np.arange(n, dtype=np.int64), params.seed)
    ham = build_hamiltonian(setup.spec, grid, params.lambda_mag)
    prop = ham.propagator(dt)
    psi = setup.initial.psi
    flags = np.zeros(n, dtype=bool)
    out = np.empty((total + 1, *q.shape))
    out[0] = q
    for k in range(total):
        wf = WaveFunction(psi, grid, k * dt, params.lambda_mag)
        hydro = decompose(wf)
        if hydro.node_mask.any():
            flags |= interpolate(hydro.node_mask.astype(float), grid, state.positions) > 0
        advance(state, hydro, setup.spec, params, dt, osmotic=False)
        out[k + 1] = state.positions
        psi = prop.apply(psi)
    return ReferencePaths(setup.initial.time + dt * np.arange(total + 1), out, flags, state.alive.astype(bool))


def _numeric_derivative(f, x: np.ndarray, axis: int, dim: int, eps: float = 1e-6) -> np.ndarray:
    coords = [x[:, ax] for ax in range(dim)]
    up = list(coords)
    dn = list(coords)
    up[axis] = coords[axis] + eps
    dn[axis] = coords[axis] - eps
    return (f(*up) - f(*dn)) / (2 * eps)


def classical_reference(scenario, q0, times) -> np.ndarray:
    """Characteristics of the classical Hamilton-Jacobi flow from ``q0``.

    The initial momentum is the phase gradient of the initial state at
    ``q0``; Hamilton's equations are then integrated with ``solve_ivp``.
    Returns positions at ``times`` (offsets from the initial time), shape
    ``(len(times), n)`` in 1D or ``(len(times), n, 2)`` in 2D.
    """
    setup = _as_setup(scenario)
    grid, spec = setup.grid, setup.spec
    dim = grid.dim
    q0 = np.asarray(q0, dtype=float).reshape(-1, dim)
    n = len(q0)
    filled = decompose(setup.initial).filled()
    p0 = np.stack([interpolate(filled.s_grad[ax], grid, q0 if dim == 2 else q0[:, 0]) for ax in range(dim)], axis=1)

    def hamiltonian(qx, px):
        coords = [qx[:, ax] for ax in range(dim)]
        h = spec.potential_at(*coords)
        for ax in range(dim):
            h = h + 0.5 * spec.metric_at(ax, *coords) * (px[:, ax] - spec.vector_potential_at(ax, *coords)) ** 2
        return h

    def rhs(_t, y):
        qx = y[: n * dim].reshape(n, dim)
        px = y[n * dim:].reshape(n, dim)
        dq = np.empty_like(qx)
        dp = np.empty_like(px)
        for ax in range(dim):
            dq[:, ax] = _numeric_derivative(lambda *c: hamiltonian(qx, np.stack(c, axis=1)), px, ax, dim)
            dp[:, ax] = -_numeric_derivative(lambda *c: hamiltonian(np.stack(c, axis=1), px), qx, ax, dim)
        return np.concatenate([dq.ravel(), dp.ravel()])

    times = np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(times.max())), np.concatenate([q0.ravel(), p0.ravel()]),
                    t_eval=times, rtol=1e-10, atol=1e-12, method="DOP853")
    if not sol.success:
        raise DomainError(f"classical integration failed: {sol.message}")
    qs = sol.y[: n * dim].T.reshape(len(times), n, dim)
    return qs[..., 0] if dim == 1 else qs
