import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochquant import oracles
from stochquant.action import HamiltonianSpec, StochasticParams
from stochquant.errors import ConfigurationError, DomainError
from stochquant.madelung import decompose
from stochquant.numerics import SpatialGrid, density_bin_masses, total_variation
from stochquant.scenarios import preset
from stochquant.states import gaussian, oscillator_eigenstate
from stochquant.trajectories import (EnsembleSetup, ParticleState, advance, bohmian_reference, classical_reference,
                                     histogram_tv, run_ensemble, sample_initial)

LINE = SpatialGrid.line(-10, 10, 999)


def free_setup(n_points=999, lam=1.0, dt=0.01, seed=5, boost=0.0, extent=10.0):
    g = SpatialGrid.line(-extent, extent, n_points)
    return EnsembleSetup(HamiltonianSpec(), g, StochasticParams(lam, dt, seed=seed),
                         gaussian(g, 0.0, 1.0, boost, lambda_mag=lam), "free")


@given(st.integers(0, 2**63), st.integers(1, 300))
def test_initial_positions_are_prefix_stable(seed, n):
    rho = gaussian(LINE).density
    full = sample_initial(rho, LINE, 400, seed)
    assert np.array_equal(sample_initial(rho, LINE, n, seed), full[:n])
    assert np.array_equal(sample_initial(rho, LINE, 50, seed, first_index=100), full[100:150])


def test_initial_positions_follow_the_density():
    rho = oscillator_eigenstate(LINE, 1).density
    q = sample_initial(rho, LINE, 200_000, 1)
    edges = np.linspace(-5, 5, 51)
    tv = total_variation(np.histogram(q, edges)[0], density_bin_masses(rho, LINE, edges))
    assert tv < 0.01
    g2 = SpatialGrid.plane((-4, 4), (-4, 4), 81)
    x, y = g2.mesh()
    q2 = sample_initial(np.exp(-(x - 1) ** 2 - y**2), g2, 50_000, 2)
    assert q2.shape == (50_000, 2)
    assert q2.mean(axis=0) == pytest.approx([1.0, 0.0], abs=0.02)


def test_initial_sampling_validates_density():
    with pytest.raises(DomainError):
        sample_initial(-np.ones(LINE.shape), LINE, 10, 0)
    with pytest.raises(DomainError):
        sample_initial(np.zeros(LINE.shape), LINE, 10, 0)
    with pytest.raises(ConfigurationError):
        sample_initial(np.ones(LINE.shape), LINE, 0, 0)


@pytest.mark.parametrize("workers,block", [(1, 64), (3, 100), (2, 10_000)])
def test_advance_does_not_depend_on_partitioning(workers, block):
    setup = free_setup()
    hydro = decompose(setup.initial)
    ref = ParticleState.initial(hydro.rho, setup.grid, 777, 3)
    other = ref.copy()
    for _ in range(5):
        advance(ref, hydro, setup.spec, setup.params)
        advance(other, hydro, setup.spec, setup.params, workers=workers, block=block)
    assert np.array_equal(ref.positions, other.positions)
    assert np.array_equal(ref.signs, other.signs)
    assert ref.step == other.step == 5


def test_initial_signs_are_balanced():
    s = ParticleState.initial(gaussian(LINE).density, LINE, 20_000, 9).signs
    assert set(np.unique(s)) == {-1.0, 1.0}
    assert abs(s.mean()) < 4 / np.sqrt(20_000)


def test_ensembles_are_reproducible_and_seed_dependent():
    a = run_ensemble(free_setup(seed=1), 500, 0.2)
    b = run_ensemble(free_setup(seed=1), 500, 0.2)
    c = run_ensemble(free_setup(seed=2), 500, 0.2)
    assert np.array_equal(a.final_positions, b.final_positions)
    assert not np.array_equal(a.final_positions, c.final_positions)
    assert len(a.snapshots) == 2 and a.snapshots[0].time == 0.0


def test_prefix_of_a_larger_ensemble_is_the_smaller_ensemble():
    small = run_ensemble(free_setup(), 300, 0.1)
    large = run_ensemble(free_setup(), 900, 0.1)
    assert np.array_equal(small.final_positions, large.final_positions[:300])


def test_free_ensemble_tracks_the_spreading_density():
    setup = free_setup(n_points=1599, dt=0.01, extent=16.0)
    t = 1.0
    r = run_ensemble(setup, 40_000, t, [0.0, 0.5, t])
    for snap in r.snapshots:
        assert snap.tv < 0.03
    q = r.snapshots[-1].live_positions()[:, 0]
    assert q.std() == pytest.approx(oracles.free_width(t, 1.0), rel=0.02)
    assert r.terminated_fraction == 0.0


def test_guidance_flow_follows_the_closed_form_paths():
    setup = free_setup(n_points=1599, dt=0.005, boost=0.5, extent=16.0)
    q0 = np.linspace(-2, 2, 9)
    ref = bohmian_reference(setup, q0, 1.0)
    exact = oracles.gaussian_bohmian_path(q0, 1.0, boost=0.5)
    assert np.abs(ref.positions[-1] - exact).max() < 5e-3
    assert not ref.node_flag.any() and ref.alive.all()
    assert ref.times[-1] == pytest.approx(1.0)


def test_bohmian_reference_flags_node_crossings():
    g = SpatialGrid.line(-6, 6, 599)  # a node sits exactly on q = 0
    sc = EnsembleSetup(HamiltonianSpec(potential=lambda q: 0.5 * q**2), g, StochasticParams(dt=0.001),
                       oscillator_eigenstate(g, 1))
    ref = bohmian_reference(sc, [0.0, 2.0], 0.01)
    assert ref.node_flag.tolist() == [True, False]
    with pytest.raises(DomainError):
        bohmian_reference(sc, [50.0], 0.01)


def test_classical_reference_solves_the_oscillator():
    sc = preset("oscillator_n0")
    t = np.linspace(0, 2.0, 11)
    q = classical_reference(sc, [0.5, -1.0], t)
    assert q.shape == (11, 2)
    assert np.allclose(q, np.outer(np.cos(t), [0.5, -1.0]), atol=1e-7)


def test_leaving_the_box_terminates_and_warns():
    # the packet reflects off the walls; coarse steps overshoot them
    g = SpatialGrid.line(-3, 3, 300)
    setup = EnsembleSetup(HamiltonianSpec(), g, StochasticParams(dt=0.1), gaussian(g, 0.0, 0.5, boost=4.0))
    with pytest.warns(RuntimeWarning, match="left the domain"):
        r = run_ensemble(setup, 2000, 1.0)
    assert r.terminated_fraction > 0.5
    assert r.warnings
    assert r.snapshots[-1].live.sum() == r.snapshots[-1].retained_fraction * 2000


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        run_ensemble(free_setup(), 10, 0.105)
    with pytest.raises(ConfigurationError):
        run_ensemble(free_setup(), 10, 0.1, [0.2])
    with pytest.raises(ConfigurationError):
        run_ensemble(free_setup(), -1, 0.1)
    with pytest.raises(ConfigurationError):
        run_ensemble(object(), 10, 0.1)


def test_setup_checks_consistency():
    g = SpatialGrid.line(-3, 3, 64)
    with pytest.raises(ConfigurationError):
        EnsembleSetup(HamiltonianSpec(), g, StochasticParams(lambda_mag=2.0), gaussian(g))
    with pytest.raises(ConfigurationError):
        EnsembleSetup(HamiltonianSpec(), g, StochasticParams(), gaussian(SpatialGrid.line(-3, 3, 65)))


def test_empty_ensemble_still_evolves_the_wave():
    r = run_ensemble(free_setup(), 0, 0.1)
    assert r.n == 0 and r.terminated_fraction == 0.0
    assert r.snapshots[-1].wavefunction.time == pytest.approx(0.1)


def test_paths_and_outputs(tmp_path):
    r = run_ensemble(free_setup(), 50, 0.1, record_paths=True, path_stride=2)
    assert r.paths.shape == (6, 50)
    assert np.allclose(r.path_times, np.arange(6) * 0.02)
    r.to_json(tmp_path / "e.json")
    summary = json.loads((tmp_path / "e.json").read_text())
    assert summary["seed"] == 5 and summary["n"] == 50
    r.positions_csv(tmp_path / "p.csv")
    r.histogram_csv(tmp_path / "h.csv")
    assert len((tmp_path / "p.csv").read_text().splitlines()) > 50
    assert r.snapshot_at(0.1) is r.snapshots[-1]
    with pytest.raises(ConfigurationError):
        r.snapshot_at(0.05)


def test_two_dimensional_ensemble_matches_its_density():
    sc = preset("two_free_particles")
    r = run_ensemble(sc, 20_000, 0.2, [0.0, 0.2])
    assert r.final_positions.shape == (20_000, 2)
    assert r.snapshots[-1].tv < 0.03
    edges, counts, dens, tv = histogram_tv(r.final_positions, r.snapshots[-1].alive,
                                           r.snapshots[-1].hydro.rho, sc.grid())
    assert len(edges) == 2 and tv == pytest.approx(r.snapshots[-1].tv)


def test_guidance_only_mode_has_no_branch_term():
    setup = free_setup(dt=0.01)
    r = run_ensemble(setup, 200, 0.1, osmotic=False)
    q0 = r.snapshots[0].positions
    ref = bohmian_reference(setup, q0, 0.1)
    assert np.allclose(r.final_positions, ref.positions[-1])
