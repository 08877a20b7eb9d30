"""Stationary action, its random deviation, and the exponential transition law.

A classical system is described by ``H = g/2 (p - a)^2 + V`` (per axis).
Along a short segment the system accrues the stationary action
``dA = L dt``; the stochastic model perturbs it by a deviation
``dS - dA`` whose magnitude is exponentially distributed with mean
``|lambda| / 2`` and whose sign follows the sign of ``lambda``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import lambertw

from .errors import ConfigurationError, DomainError, InsufficientSamplesError
from .numerics import SpatialGrid, face_average, gradient, total_variation
from .rng import Stream, Tag

ScalarField = Callable[..., np.ndarray]


def _zero(*coords):
    return np.zeros(np.broadcast(*coords).shape)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Classical Hamiltonian ``sum_i g_i(q)/2 (p_i - a_i(q))^2 + V(q)``.

    ``mass`` is a scalar or one value per axis (constant metric ``1/m``).
    ``metric`` optionally replaces ``1/m`` by a position-dependent ``g(q)``;
    only allowed in one dimension.  ``potential`` and the entries of
    ``vector_potential`` are callables of the coordinate arrays.
    """

    dim: int = 1
    mass: float | tuple[float, ...] = 1.0
    potential: ScalarField | None = None
    vector_potential: tuple[ScalarField, ...] | None = None
    metric: ScalarField | None = None
    label: str = ""

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError("dim must be 1 or 2")
        masses = np.broadcast_to(np.asarray(self.mass, dtype=float), (self.dim,))
        if not np.all(masses > 0) or not np.all(np.isfinite(masses)):
            raise DomainError("mass must be positive and finite")
        if self.metric is not None and self.dim != 1:
            raise ConfigurationError("position-dependent metric is only supported in one dimension")
        if self.vector_potential is not None and len(self.vector_potential) != self.dim:
            raise ConfigurationError("vector_potential needs one component per axis")

    @property
    def masses(self) -> tuple[float, ...]:
        return tuple(np.broadcast_to(np.asarray(self.mass, dtype=float), (self.dim,)).tolist())

    def metric_at(self, axis: int, *coords) -> np.ndarray:
        shape = np.broadcast(*coords).shape
        if self.metric is not None:
            return np.broadcast_to(np.asarray(self.metric(*coords), dtype=float), shape)
        return np.full(shape, 1.0 / self.masses[axis])

    def potential_at(self, *coords) -> np.ndarray:
        if self.potential is None:
            return _zero(*coords)
        return np.broadcast_to(np.asarray(self.potential(*coords), dtype=float), np.broadcast(*coords).shape)

    def vector_potential_at(self, axis: int, *coords) -> np.ndarray:
        if self.vector_potential is None:
            return _zero(*coords)
        return np.broadcast_to(
            np.asarray(self.vector_potential[axis](*coords), dtype=float), np.broadcast(*coords).shape
        )

    @property
    def has_vector_potential(self) -> bool:
        return self.vector_potential is not None

    def validate(self, grid: SpatialGrid) -> None:
        if grid.dim != self.dim:
            raise ConfigurationError(f"spec is {self.dim}D but grid is {grid.dim}D")
        coords = grid.mesh()
        for ax in range(self.dim):
            g = self.metric_at(ax, *coords)
            if not np.all(g > 0):
                raise DomainError("metric g must be strictly positive on the grid")
            if not np.all(np.isfinite(self.vector_potential_at(ax, *coords))):
                raise DomainError("vector potential must be finite on the grid")
        if not np.all(np.isfinite(self.potential_at(*coords))):
            raise DomainError("potential must be finite on the grid")

    def with_potential(self, extra: ScalarField, scale: float = 1.0) -> "HamiltonianSpec":
        """Spec with ``scale * extra`` added to the scalar potential."""
        base = self.potential

        def shifted(*coords):
            v = scale * np.asarray(extra(*coords), dtype=float)
            return v if base is None else v + base(*coords)

        return replace(self, potential=shifted)

    def shifted(self, c: float) -> "HamiltonianSpec":
        return self.with_potential(lambda *coords: np.full(np.broadcast(*coords).shape, float(c)))


def compound(spec1: HamiltonianSpec, spec2: HamiltonianSpec) -> HamiltonianSpec:
    """Two non-interacting one-dimensional systems as one 2D configuration space."""
    if spec1.dim != 1 or spec2.dim != 1:
        raise ConfigurationError("compound() combines two one-dimensional specs")
    if spec1.metric is not None or spec2.metric is not None:
        raise ConfigurationError("compound systems need constant metrics")

    def potential(q1, q2):
        return spec1.potential_at(q1) + spec2.potential_at(q2)

    vector = None
    if spec1.has_vector_potential or spec2.has_vector_potential:
        vector = (lambda q1, q2: spec1.vector_potential_at(0, q1 + 0 * q2),
                  lambda q1, q2: spec2.vector_potential_at(0, q2 + 0 * q1))
    return HamiltonianSpec(
        dim=2,
        mass=(spec1.masses[0], spec2.masses[0]),
        potential=potential,
        vector_potential=vector,
        label=f"{spec1.label}+{spec2.label}",
    )


@dataclass(frozen=True)
class StochasticParams:
    """Parameters of the sign-switching stochastic dynamics.

    ``lambda_mag`` is the action scale (``hbar`` in quantum runs); the sign
    of ``lambda`` is carried by a dichotomous process that flips with
    probability ``flip_prob`` at every integrator step ``dt``.
    """

    lambda_mag: float = 1.0
    dt: float = 0.005
    flip_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.lambda_mag > 0:
            raise DomainError("lambda_mag must be > 0")
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        if not 0 < self.flip_prob <= 1:
            raise DomainError("flip_prob must lie in (0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class DeviationSample:
    """Signed deviation ``dS - dA`` (scalar or array) and the branch that produced it."""

    value: float | np.ndarray
    sign_branch: int

    @property
    def magnitude(self):
        return np.abs(self.value)


def _coords_of(q, dim: int) -> tuple[np.ndarray, ...]:
    q = np.asarray(q, dtype=float)
    if dim == 1:
        return (q[..., 0],) if q.ndim and q.shape[-1] == 1 and q.ndim > 1 else (q,)
    return tuple(q[..., ax] for ax in range(dim))


def infinitesimal_action(q, qdot, dt: float, spec: HamiltonianSpec, grid: SpatialGrid | None = None):
    """Stationary action ``L dt = p.qdot dt - H dt`` along a short segment.

    With ``qdot = g (p - a)`` the Lagrangian is
    ``sum_i qdot_i^2 / (2 g_i) + a_i qdot_i - V``.  When ``grid`` is given,
    points outside it raise :class:`DomainError` instead of extrapolating.
    """
    if not dt > 0:
        raise DomainError("dt must be > 0")
    if grid is not None and not np.all(grid.contains(q)):
        raise DomainError("infinitesimal_action: q outside the grid extent (would extrapolate)")
    coords = _coords_of(q, spec.dim)
    vel = _coords_of(qdot, spec.dim)
    lag = -spec.potential_at(*coords)
    for ax in range(spec.dim):
        g = spec.metric_at(ax, *coords)
        lag = lag + vel[ax] ** 2 / (2 * g) + spec.vector_potential_at(ax, *coords) * vel[ax]
    out = lag * dt
    return float(out) if np.ndim(out) == 0 else out


def classical_momentum(q, qdot, spec: HamiltonianSpec) -> np.ndarray:
    """``p = dL/dqdot = qdot / g + a``, stacked on the last axis for 2D."""
    coords = _coords_of(q, spec.dim)
    vel = _coords_of(qdot, spec.dim)
    p = [vel[ax] / spec.metric_at(ax, *coords) + spec.vector_potential_at(ax, *coords) for ax in range(spec.dim)]
    return p[0] if spec.dim == 1 else np.stack(p, axis=-1)


def classical_hamiltonian(q, p, spec: HamiltonianSpec):
    coords = _coords_of(q, spec.dim)
    mom = _coords_of(p, spec.dim)
    h = spec.potential_at(*coords)
    for ax in range(spec.dim):
        h = h + 0.5 * spec.metric_at(ax, *coords) * (mom[ax] - spec.vector_potential_at(ax, *coords)) ** 2
    return h


def _as_axes(s_grad, dim: int) -> np.ndarray:
    s_grad = np.asarray(s_grad, dtype=float)
    if dim == 1 and s_grad.ndim == 1:
        s_grad = s_grad[None]
    return s_grad


def theta(s_grad, spec: HamiltonianSpec, grid: SpatialGrid, method: str = "divergence") -> np.ndarray:
    """Divergence of the classical velocity field ``g (dS - a)``.

    ``s_grad`` holds the phase gradient per axis, shape ``(dim, *grid.shape)``
    (a bare array is accepted in 1D).  ``method="divergence"`` differentiates
    the velocity field; ``"product"`` expands it as
    ``dg (dS - a) + g d(dS - a)``; ``"flux"`` takes face fluxes.  All agree
    to second order.
    """
    spec.validate(grid)
    s_grad = _as_axes(s_grad, spec.dim)
    if s_grad.shape != (grid.dim, *grid.shape):
        raise ConfigurationError(f"s_grad has shape {s_grad.shape}, expected {(grid.dim, *grid.shape)}")
    coords = grid.mesh()
    out = np.zeros(grid.shape)
    for ax in range(grid.dim):
        g = spec.metric_at(ax, *coords)
        kin = s_grad[ax] - spec.vector_potential_at(ax, *coords)
        if method == "divergence":
            out += gradient(g * kin, grid, ax)
        elif method == "product":
            out += gradient(g, grid, ax) * kin + g * gradient(kin, grid, ax)
        elif method == "flux":
            out += _flux_divergence(g * kin, grid, ax)
        else:
            raise ConfigurationError(f"unknown theta method {method!r}")
    return out


def _flux_divergence(v: np.ndarray, grid: SpatialGrid, axis: int) -> np.ndarray:
    vf = face_average(v, grid, axis)
    h = grid.spacing[axis]
    if grid.periodic:
        return (vf - np.roll(vf, 1, axis=axis)) / h
    return np.diff(vf, axis=axis) / h


def sample_deviation(params: StochasticParams, sign: int, stream: Stream, size: int | None = None) -> DeviationSample:
    """Draw ``dS - dA`` from the exponential law by inverse CDF.

    The magnitude has mean ``|lambda| / 2``; the value carries the current
    branch sign so that ``(dS - dA) / lambda`` is never negative.
    """
    if sign not in (1, -1):
        raise ConfigurationError("sign must be +1 or -1")
    u = stream.uniform(size)
    mag = -0.5 * params.lambda_mag * np.log1p(-np.asarray(u))
    value = sign * mag
    return DeviationSample(float(value) if size is None else value, sign)


def transition_log_density(dev, theta_val, dt: float, lambda_signed: float):
    """Unnormalized log of ``exp(-2 dev / lambda) exp(-theta dt)``.

    Returns ``-inf`` where ``dev / lambda < 0`` (outside the support).  The
    additive normalization constant is dropped.
    """
    if lambda_signed == 0:
        raise DomainError("lambda must be non-zero")
    x = np.asarray(dev, dtype=float) / lambda_signed
    out = np.where(x >= 0, -2.0 * x - np.asarray(theta_val, dtype=float) * dt, -np.inf)
    return float(out) if out.ndim == 0 else out


# -- compound systems ---------------------------------------------------------

def _total_deviation_quantile(u: np.ndarray, lambda_mag: float, law: str) -> np.ndarray:
    """Inverse CDF of the total deviation ``D`` when the joint law depends on ``D`` only.

    A joint density ``f(d1 + d2)`` on the quadrant gives ``D`` the density
    ``D f(D)`` and an independent uniform split ``d1 = U D``.
    """
    mean = lambda_mag / 2
    if law == "exponential":
        # D ~ Gamma(2, mean): CDF 1 - (1 + x) e^{-x}, x = D / mean
        x = -1.0 - lambertw(-(1.0 - u) / np.e, k=-1).real
        return mean * np.maximum(x, 0.0)
    if law == "half_normal":
        # f(d) ~ exp(-d^2 / 2 s^2) with mean s sqrt(2/pi) = lambda/2; D is Rayleigh(s)
        s = mean * np.sqrt(np.pi / 2)
        return s * np.sqrt(-2.0 * np.log1p(-u))
    raise ConfigurationError(f"unknown deviation law {law!r}")


def sample_compound_deviation(
    params: StochasticParams, n: int, stream: Stream, sign: int = 1, law: str = "exponential"
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``(dev1, dev2)`` for two non-interacting subsystems from the joint law.

    The sampler only knows that the compound transition probability is a
    function of the total deviation; whether the pair factorizes is left to
    be measured.  ``law="half_normal"`` is a non-exponential control.
    """
    u = stream.uniform(2 * n)
    total = _total_deviation_quantile(u[0::2], params.lambda_mag, law)
    split = u[1::2]
    d1 = split * total
    return sign * d1, sign * (total - d1)


@dataclass
class FactorizationReport:
    tv_joint: float
    tv_sweep_max: float
    n_samples: int
    seed: int
    sweep: list[float] = field(default_factory=list)
    tv_sweep: list[float] = field(default_factory=list)
    law: str = "exponential"
    bins: int = 20

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _harmonic(q):
    return 0.5 * q**2


def verify_factorization(
    spec1: HamiltonianSpec,
    spec2: HamiltonianSpec,
    params: StochasticParams,
    n_samples: int,
    sweep: Sequence[float] = (0.0, 1.0, 10.0),
    sweep_shape: ScalarField = _harmonic,
    bins: int = 20,
    law: str = "exponential",
    box: float = 1.0,
) -> FactorizationReport:
    """Measure whether the compound deviation law factorizes.

    For each amplitude in ``sweep`` particle 2 gets the extra potential
    ``amplitude * sweep_shape``.  Random short segments (positions in
    ``[-box, box]``, unit-scale velocities) give ``dA_1`` and ``dA_2``; the
    compound law supplies ``dS_1 + dS_2``; deviations are recovered as
    ``dS_i - dA_i``.  Reports the TV distance between the joint histogram of
    ``(|dev1|, |dev2|)`` and the product of its marginals at the first sweep
    value, and the largest pairwise TV between particle-1 marginals across
    the sweep.  Each sweep value uses its own substream.
    """
    if spec1.dim != 1 or spec2.dim != 1:
        raise ConfigurationError("verify_factorization expects two one-dimensional specs")
    if n_samples < 1000:
        raise InsufficientSamplesError(f"need at least 1000 samples, got {n_samples}")
    edges = np.linspace(0.0, 4.0 * params.lambda_mag, bins + 1)
    top = np.nextafter(edges[-1], 0.0)
    marginals = []
    tv_joint = None
    for k, amp in enumerate(sweep):
        spec2k = spec2.with_potential(sweep_shape, amp)
        kin = Stream(params.seed, k, Tag.KINEMATICS)
        q = box * (2 * kin.uniform(2 * n_samples) - 1)
        v = 2 * kin.uniform(2 * n_samples) - 1
        da1 = infinitesimal_action(q[0::2], v[0::2], params.dt, spec1)
        da2 = infinitesimal_action(q[1::2], v[1::2], params.dt, spec2k)
        d1, d2 = sample_compound_deviation(params, n_samples, Stream(params.seed, k, Tag.FACTORIZATION), law=law)
        ds1 = da1 + d1
        ds2 = da2 + d2
        dev1 = np.clip(np.abs(ds1 - da1), 0.0, top)
        dev2 = np.clip(np.abs(ds2 - da2), 0.0, top)
        m1, _ = np.histogram(dev1, edges)
        marginals.append(m1)
        if tv_joint is None:
            joint, _, _ = np.histogram2d(dev1, dev2, [edges, edges])
            m2, _ = np.histogram(dev2, edges)
            tv_joint = total_variation(joint, np.outer(m1, m2))
    tv_pairs = [
        total_variation(marginals[i], marginals[j])
        for i in range(len(marginals))
        for j in range(i + 1, len(marginals))
    ]
    return FactorizationReport(
        tv_joint=float(tv_joint),
        tv_sweep_max=float(max(tv_pairs)) if tv_pairs else 0.0,
        n_samples=int(n_samples),
        seed=int(params.seed),
        sweep=[float(a) for a in sweep],
        tv_sweep=[float(t) for t in tv_pairs],
        law=law,
        bins=bins,
    )
