"""The acceptance suite: ten numbered criteria with measured values and thresholds.

Each ``criterion_N(ctx)`` returns a :class:`CriterionResult`.  ``quick``
and ``full`` suites run the same checks; ``quick`` uses smaller ensembles
where the threshold is a Monte Carlo z-score (so it stays meaningful at
any ``n``) and the full ensemble size where the threshold is absolute.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import oracles
from . import statistics as st
from .action import HamiltonianSpec, StochasticParams, sample_deviation, verify_factorization
from .errors import ConfigurationError
from .numerics import SpatialGrid, norm
from .rng import Stream, Tag
from .scenarios import Scenario, preset
from .solver import build_hamiltonian, evolve, ordering_defect
from .states import gaussian, oscillator_eigenstate
from .trajectories import bohmian_reference, classical_reference, run_ensemble

DEFAULT_SEED = 20240611


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: dict
    thresholds: dict
    runtime: float
    budget: float
    notes: str = ""

    @property
    def within_budget(self) -> bool:
        return self.runtime <= self.budget

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.name}: {self.summary()} ({self.runtime:.1f}s / {self.budget:.0f}s)"

    def summary(self) -> str:
        parts = []
        for k, v in self.measured.items():
            if isinstance(v, float):
                parts.append(f"{k}={v:.4g}")
            elif isinstance(v, (int, bool, str)):
                parts.append(f"{k}={v}")
        return ", ".join(parts[:8])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["within_budget"] = self.within_budget
        return _plain(out)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


@dataclass
class SuiteContext:
    seed: int = DEFAULT_SEED
    scale: float = 1.0
    workers: int = 1
    cache: dict = field(default_factory=dict)

    def n(self, full: int) -> int:
        return max(1000, int(round(full * self.scale)))

    def ensemble(self, name: str, n: int | None = None, **overrides):
        """Cached run of a preset at its own schedule (seeded from the suite seed)."""
        sc = preset(name, seed=self.seed, **overrides)
        n = sc.trajectories if n is None else n
        key = (name, n, tuple(sorted(overrides.items())))
        if key not in self.cache:
            self.cache[key] = run_ensemble(sc, n, sc.t_final, sc.snapshot_times, workers=self.workers)
        return self.cache[key]


def _timed(number: int, name: str, budget: float):
    def wrap(fn: Callable[[SuiteContext], tuple[bool, dict, dict, str]]):
        def run(ctx: SuiteContext) -> CriterionResult:
            t0 = time.perf_counter()
            passed, measured, thresholds, notes = fn(ctx)
            elapsed = time.perf_counter() - t0
            return CriterionResult(number, name, bool(passed) and elapsed <= budget, measured, thresholds,
                                   elapsed, budget, notes)

        run.__name__ = fn.__name__
        run.number = number
        return run

    return wrap


@_timed(1, "deviation-law mean", 5.0)
def criterion_1(ctx: SuiteContext):
    params = StochasticParams(lambda_mag=2.0, seed=ctx.seed)
    d = sample_deviation(params, 1, Stream(ctx.seed, 0, Tag.DEVIATION), 10**6)
    mean = float(np.mean(np.abs(d.value)))
    rel = abs(mean - 1.0)
    return rel <= 0.005, {"mean_abs_dev": mean, "rel_error": rel, "n": 10**6}, {"rel_error_max": 0.005}, ""


@_timed(2, "locality factorization", 30.0)
def criterion_2(ctx: SuiteContext):
    free = HamiltonianSpec(label="free")
    rep = verify_factorization(free, free, StochasticParams(1.0, 0.01, seed=ctx.seed), 10**5, sweep=(0.0, 1.0, 10.0))
    ok = rep.tv_joint <= 0.02 and rep.tv_sweep_max <= 0.02
    return ok, {"tv_joint": rep.tv_joint, "tv_sweep_max": rep.tv_sweep_max, "n": rep.n_samples}, \
        {"tv_joint_max": 0.02, "tv_sweep_max": 0.02}, ""


@_timed(3, "solver correctness", 60.0)
def criterion_3(ctx: SuiteContext):
    # norm drift over 10^3 steps
    grid = SpatialGrid.line(-16, 16, 1600)
    ham = build_hamiltonian(HamiltonianSpec(), grid)
    wf = gaussian(grid, 0.0, 1.0, 1.0)
    dt = 0.005
    out = evolve(wf, ham, 1000 * dt, dt)
    drift = abs(out[-1].norm - wf.norm)
    # free-packet width up to the doubling time
    t2 = oracles.width_doubling_time(1.0)
    k = 400
    dtw = t2 / k
    times = [t2 * j / 8 for j in range(1, 9)]
    snaps = evolve(gaussian(grid, 0.0, 1.0), ham, t2, dtw, times)
    q = grid.axes[0]
    width_err = 0.0
    for s in snaps:
        rho = s.density * grid.spacing[0]
        mq = np.sum(q * rho)
        var = np.sum((q - mq) ** 2 * rho)
        width_err = max(width_err, abs(var / oracles.free_width(s.time, 1.0) ** 2 - 1.0))
    # oscillator ground state
    og = SpatialGrid.line(-8, 8, 6400)
    osc = HamiltonianSpec(potential=lambda x: 0.5 * x**2)
    g0 = oscillator_eigenstate(og, 0)
    final = evolve(g0, build_hamiltonian(osc, og), 1.0, 0.001)[-1]
    stat = float(np.max(np.abs(np.abs(final.psi) - np.abs(g0.psi))))
    overlap = np.vdot(g0.psi, final.psi) * og.spacing[0]
    phase_err = float(abs(np.angle(overlap * np.exp(0.5j))))
    ok = drift <= 1e-8 and width_err <= 1e-3 and stat <= 1e-6 and phase_err <= 1e-3
    return ok, {"norm_drift": drift, "width_rel_error": width_err, "ground_state_max_abs_change": stat,
                "ground_state_phase_error": phase_err}, \
        {"norm_drift": 1e-8, "width_rel_error": 1e-3, "ground_state_max_abs_change": 1e-6, "phase_error": 1e-3}, ""


@_timed(4, "ordering identity", 5.0)
def criterion_4(ctx: SuiteContext):
    errs = {}
    ok = True
    for lam in (1.0, 0.5):
        series = []
        for pts in (400, 800, 1600):
            grid = SpatialGrid.line(-12, 12, pts)
            psi = gaussian(grid, 0.7, 1.0, 0.8, lam).psi
            d = ordering_defect(psi, grid, lam)
            series.append(norm(d - lam**2 * psi, grid) / (lam**2 * norm(psi, grid)))
        ratios = [series[i] / series[i + 1] for i in range(len(series) - 1)]
        errs[f"rel_error_lambda_{lam}"] = series[-1]
        errs[f"refinement_ratios_lambda_{lam}"] = ratios
        ok &= series[-1] <= 1e-2 and all(3.0 <= r <= 5.0 for r in ratios)
    return ok, errs, {"rel_error_max": 1e-2, "refinement_ratio": [3.0, 5.0]}, "second order: error ratio near 4 per halving"


@_timed(5, "Born-rule equivariance", 300.0)
def criterion_5(ctx: SuiteContext):
    t2 = oracles.width_doubling_time(1.0)
    tvs = {}
    for steps in (35, 70, 140, 560):
        r = ctx.ensemble("free_gaussian", 10**5, dt=t2 / steps) if steps != 560 else ctx.ensemble("free_gaussian", 10**5)
        tvs[steps] = float(r.snapshots[-1].tv)
    coarse = [tvs[35], tvs[70], tvs[140]]
    decreasing = all(coarse[i + 1] < coarse[i] for i in range(2))
    ok = tvs[560] <= 0.02 and decreasing
    return ok, {"tv_final": tvs[560], "tv_dt_T/35": tvs[35], "tv_dt_T/70": tvs[70], "tv_dt_T/140": tvs[140],
                "decreasing": decreasing, "n": 10**5}, {"tv_max": 0.02}, \
        "halving series uses coarse steps where the finite-dt bias exceeds the sampling floor"


SCENARIOS_6 = ("free_gaussian", "oscillator_n0", "boosted_gaussian")


def observable_family(result) -> list[st.ObservableReport]:
    return [
        st.mean_position_function(result, lambda q: q, name="<q>"),
        st.position_variance(result),
        st.mean_momentum(result),
        st.mean_quadratic_momentum(result),
        st.mean_energy(result),
    ]


@_timed(6, "observable equivalence", 300.0)
def criterion_6(ctx: SuiteContext):
    measured = {}
    worst = 0.0
    for name in SCENARIOS_6:
        r = ctx.ensemble(name, ctx.n(10**5))
        for rep in observable_family(r):
            measured[f"{name}:{rep.name}:z"] = rep.z
            worst = max(worst, rep.z)
    measured["max_z"] = worst
    return worst <= 4.0, measured, {"z_max": 4.0}, ""


SUITE = ("free_gaussian", "boosted_gaussian", "oscillator_n0", "oscillator_n1", "superposition_phase",
         "two_free_particles", "position_dependent_mass", "vortex_2d")


@_timed(7, "uncertainty relations", 300.0)
def criterion_7(ctx: SuiteContext):
    measured = {}
    all_hold = True
    for name in SUITE:
        r = ctx.ensemble(name, ctx.n(10**5) if name in SCENARIOS_6 or name == "oscillator_n1" else None)
        axes = range(r.setup.grid.dim)
        for ax in axes:
            u = st.uncertainty_report(r, axis=ax)
            measured[f"{name}:ax{ax}:product"] = u.product
            all_hold &= u.all_hold
    osc = st.uncertainty_report(ctx.ensemble("oscillator_n0", ctx.n(10**5)))
    fg0 = st.uncertainty_report(ctx.ensemble("free_gaussian", ctx.n(10**5)), snapshot=0)
    sat = {}
    for key, u in (("oscillator_n0", osc), ("free_gaussian_t0", fg0)):
        rel = abs(u.product / u.bound - 1.0)
        tol = 0.02 + 4 * u.product_se / u.bound
        sat[key] = (rel, tol)
    n1 = st.uncertainty_report(ctx.ensemble("oscillator_n1", ctx.n(10**5)))
    target = oracles.oscillator_moments(1)["uncertainty_product"]
    z1 = abs(n1.product - target) / n1.product_se
    quad_ok = abs(n1.quantum_product - target) / target <= 1e-3
    ok = all_hold and all(r <= t for r, t in sat.values()) and z1 <= 4.0 and quad_ok
    measured.update({
        "all_inequalities_hold": bool(all_hold),
        "saturation_rel_osc_n0": sat["oscillator_n0"][0],
        "saturation_rel_gauss_t0": sat["free_gaussian_t0"][0],
        "n1_product": n1.product, "n1_product_se": n1.product_se, "n1_target": target, "n1_z": z1,
        "n1_quadrature_product": n1.quantum_product,
    })
    return ok, measured, {"saturation": "2% + 4 MC sigma", "n1_z_max": 4.0, "n1_target": "9 hbar^2/4"}, \
        "first excited state: target is (3/2 hbar)^2; p^2 near the node is heavy-tailed"


def _witness(q):
    return np.exp(-((q - 2.0) ** 2) / 4) + 1j * np.exp(-((q + 2.0) ** 2) / 4)


@_timed(8, "<p^3> counterexample", 300.0)
def criterion_8(ctx: SuiteContext):
    r = ctx.ensemble("superposition_phase", ctx.n(10**5))
    measured = {}
    ok = True
    for k, snap in enumerate(r.snapshots):
        orc = oracles.spectral_momentum_moments(_witness, -40, 40, lambda_mag=1.0, t=snap.time)
        d = st.p3_discrepancy(r, k, oracle=orc)
        z_ens = abs(d.ensemble - orc["model_p3"]) / d.mc_error
        z_q = abs(d.quantum - orc["quantum_p3"]) / d.mc_error
        tag = f"t={snap.time:g}"
        measured.update({f"{tag}:gap_sigma": d.z_gap, f"{tag}:ensemble_vs_oracle_z": z_ens,
                         f"{tag}:quantum_vs_oracle_z": z_q, f"{tag}:ensemble": d.ensemble,
                         f"{tag}:quantum": d.quantum, f"{tag}:inconclusive": d.inconclusive})
        ok &= d.z_gap >= 5.0 and z_ens <= 4.0 and z_q <= 4.0 and not d.inconclusive
    return ok, measured, {"gap_sigma_min": 5.0, "oracle_z_max": 4.0}, ""


def _rms(a: np.ndarray, b: np.ndarray, alive: np.ndarray) -> float:
    d = (a - b)[..., alive]
    return float(np.sqrt(np.mean(d**2)))


@_timed(9, "classical limit", 300.0)
def criterion_9(ctx: SuiteContext):
    rms = classical_limit_sweep((1.0, 0.1, 0.01), ctx.seed, n=ctx.n(4000))
    vals = [rms[k] for k in (1.0, 0.1, 0.01)]
    mono = vals[0] > vals[1] > vals[2]
    ratio = vals[2] / vals[0]
    return mono and ratio <= 0.1, {"rms_lambda_1": vals[0], "rms_lambda_0.1": vals[1], "rms_lambda_0.01": vals[2],
                                   "ratio": ratio, "monotone": mono}, {"ratio_max": 0.1}, ""


def classical_limit_sweep(lambdas, seed: int, n: int = 4000, scenario: str | Scenario = "free_gaussian",
                          stride: int = 10) -> dict:
    """RMS distance (over particles and recorded times) from the classical Hamilton-Jacobi paths."""
    base = scenario if isinstance(scenario, Scenario) else preset(scenario)
    out = {}
    for lam in lambdas:
        sc = base.with_overrides(lambda_mag=float(lam), seed=seed)
        r = run_ensemble(sc, n, sc.t_final, [sc.t_final], record_paths=True, path_stride=stride)
        ref = classical_reference(sc, r.paths[0], r.path_times - r.path_times[0])
        alive = r.snapshots[-1].live
        out[float(lam)] = _rms(r.paths, ref, alive)
    return out


@_timed(10, "Bohmian anchoring", 300.0)
def criterion_10(ctx: SuiteContext):
    t2 = oracles.width_doubling_time(1.0)
    steps = (70, 140, 280, 560)
    rms = bohmian_rms(t2, steps, ctx.seed, n=ctx.n(4000))
    vals = [rms[s] for s in steps]
    ratios = [vals[i] / vals[i + 1] for i in range(3)]
    ok = all(0.5 <= r / np.sqrt(2.0) <= 2.0 for r in ratios)
    slope = float(np.polyfit(np.log([t2 / s for s in steps]), np.log(vals), 1)[0])
    return ok, {"rms": vals, "halving_ratios": ratios, "fitted_exponent": slope}, \
        {"halving_ratio_over_sqrt2": [0.5, 2.0]}, "RMS at the final time, over particles"


def bohmian_rms(t_final: float, steps, seed: int, n: int = 4000, scenario: str = "free_gaussian") -> dict:
    out = {}
    for k in steps:
        dt = t_final / k
        sc = preset(scenario, seed=seed, dt=dt)
        r = run_ensemble(sc, n, t_final, [0.0, t_final], dt=dt)
        q0 = r.snapshots[0].positions
        ref = bohmian_reference(sc, q0, t_final, dt)
        alive = r.snapshots[-1].live & ref.alive
        out[k] = _rms(r.snapshots[-1].positions, ref.positions[-1], alive)
    return out


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)

SUITES = {"quick": 0.25, "full": 1.0}


def run_suite(name: str = "quick", seed: int = DEFAULT_SEED, only=None, workers: int = 1,
              out_dir=None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    ctx = SuiteContext(seed=seed, scale=SUITES[name], workers=workers)
    results = []
    for crit in CRITERIA:
        if only and crit.number not in only:
            continue
        res = crit(ctx)
        results.append(res)
        if echo:
            echo(res.line())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"suite": name, "seed": seed, "passed": all(r.passed for r in results),
                   "criteria": [r.to_dict() for r in results]}
        (out / f"verify_{name}.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    return results
