import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochquant import oracles
from stochquant import statistics as stats
from stochquant.errors import ConfigurationError, EmptyEnsembleError
from stochquant.scenarios import preset
from stochquant.trajectories import run_ensemble

N = 20_000


@pytest.fixture(scope="module")
def boosted():
    sc = preset("boosted_gaussian", seed=7)
    return run_ensemble(sc, N, 0.5, [0.0, 0.5])


@pytest.fixture(scope="module")
def ground():
    sc = preset("oscillator_n0", seed=7)
    return run_ensemble(sc, N, 0.2, [0.0, 0.2])


@pytest.fixture(scope="module")
def plane():
    sc = preset("vortex_2d", seed=7)
    return run_ensemble(sc, 5000, 0.02, [0.0, 0.02])


def test_batch_means_standard_error(rng):
    x = rng.normal(3.0, 2.0, 64_000)
    mean, se = stats.batch_means(x)
    assert mean == pytest.approx(x.mean())
    assert se == pytest.approx(2.0 / np.sqrt(x.size), rel=0.3)
    assert stats.batch_means(np.arange(10.0))[1] == pytest.approx(np.std(np.arange(10.0), ddof=1) / np.sqrt(10))
    assert np.isnan(stats.batch_means([1.0])[1])
    with pytest.raises(EmptyEnsembleError):
        stats.batch_means([])


@given(st.floats(-10, 10), st.floats(1e-6, 10))
def test_z_score(diff, se):
    assert stats._z(diff, se) == pytest.approx(abs(diff) / se)


def test_z_score_with_zero_error():
    assert stats._z(0.0, 0.0) == 0.0
    assert stats._z(1e-3, 0.0) == np.inf


@pytest.mark.parametrize("snapshot", [0, -1])
def test_first_and_second_moments_match_the_wave(boosted, snapshot):
    reports = [
        stats.mean_position_function(boosted, lambda q: q, snapshot, "q"),
        stats.position_variance(boosted, snapshot),
        stats.mean_momentum(boosted, snapshot),
        stats.mean_quadratic_momentum(boosted, 0.0, snapshot),
        stats.mean_quadratic_momentum(boosted, 1.0, snapshot),
        stats.momentum_variance(boosted, snapshot),
        stats.mean_energy(boosted, snapshot=snapshot),
    ]
    for r in reports:
        assert r.z < 4.5, r


def test_free_moments_agree_with_closed_forms(boosted):
    exact = oracles.gaussian_moments(1.0, boost=1.0)
    assert stats.mean_momentum(boosted).quantum == pytest.approx(exact["mean_p"], abs=5e-4)
    assert stats.mean_quadratic_momentum(boosted).quantum == pytest.approx(exact["mean_p2"], rel=1e-3)
    var_q = stats.position_variance(boosted).quantum
    assert var_q == pytest.approx(oracles.free_width(0.5, 1.0) ** 2, rel=1e-3)


def test_ground_state_energy_and_components(ground):
    e = stats.mean_energy(ground)
    assert e.quantum == pytest.approx(0.5, rel=1e-3)
    assert abs(e.ensemble - 0.5) < 4 * e.mc_error
    comp = stats.momentum_components(ground)
    for key in ("osmotic_signed", "cross"):
        assert comp[key].z < 4.5
    assert comp["phase_sq"].quantum == pytest.approx(0.0, abs=1e-10)
    assert comp["osmotic_sq"].quantum == pytest.approx(0.5, rel=1e-3)


def test_uncertainty_bounds_on_the_ground_state(ground):
    rep = stats.uncertainty_report(ground)
    assert rep.all_hold
    assert rep.product == pytest.approx(0.25, rel=0.03)
    assert rep.quantum_product == pytest.approx(0.25, rel=1e-3)
    assert rep.chain_gap == pytest.approx(0.0, abs=1e-3)  # no phase momentum in the ground state
    d = rep.to_dict()
    assert d["all_hold"] and d["bound"] == 0.25


def test_angular_momentum_of_the_vortex(plane):
    r = stats.mean_angular_momentum_2d(plane, 0)
    assert r.quantum == pytest.approx(1.0, rel=1e-2)
    assert r.z < 4.5


def test_angular_momentum_needs_two_dimensions(ground):
    with pytest.raises(ConfigurationError):
        stats.mean_angular_momentum_2d(ground)


def test_third_moment_differs_from_the_operator_value():
    sc = preset("superposition_phase", seed=11)
    r = run_ensemble(sc, 40_000, 0.0, [0.0])
    oracle = oracles.spectral_momentum_moments(
        lambda q: np.exp(-(q - 2) ** 2 / 4) + 1j * np.exp(-(q + 2) ** 2 / 4), -40, 40)
    rep = stats.p3_discrepancy(r, 0, oracle)
    assert rep.quantum == pytest.approx(oracle["quantum_p3"], abs=2e-3)
    assert rep.model_quadrature == pytest.approx(oracle["model_p3"], abs=2e-3)
    assert rep.z_model < 4.5
    assert not rep.inconclusive and rep.significant
    assert rep.to_dict()["significant"]


def test_empty_ensembles_raise():
    sc = preset("oscillator_n0")
    r = run_ensemble(sc, 0, 0.0, [0.0])
    with pytest.raises(EmptyEnsembleError):
        stats.position_variance(r)


def test_suite_outputs(tmp_path, ground):
    reps = [stats.position_variance(ground), stats.mean_energy(ground)]
    stats.write_suite_csv(reps, tmp_path / "s.csv", "oscillator_n0")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "scenario,observable,ensemble,mc_err,quantum,z" and len(lines) == 3
    stats.reports_json(reps, tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())[1]["name"] == "energy"
