import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from stochquant.action import (HamiltonianSpec, StochasticParams, _total_deviation_quantile, classical_hamiltonian,
                               classical_momentum, compound, infinitesimal_action, sample_compound_deviation,
                               sample_deviation, theta, transition_log_density, verify_factorization)
from stochquant.errors import ConfigurationError, DomainError, InsufficientSamplesError
from stochquant.numerics import SpatialGrid
from stochquant.rng import Stream, Tag

small = st.floats(-3, 3, allow_nan=False)


def lorentzian(alpha=0.2, mass=1.0):
    return lambda q: 1.0 / (mass * (1 + alpha * q**2))


class TestSpec:
    def test_rejects_nonpositive_mass(self):
        with pytest.raises(DomainError):
            HamiltonianSpec(mass=0.0)
        with pytest.raises(DomainError):
            HamiltonianSpec(dim=2, mass=(1.0, -1.0))

    def test_metric_only_in_one_dimension(self):
        with pytest.raises(ConfigurationError):
            HamiltonianSpec(dim=2, metric=lambda x, y: 1 + 0 * x)

    def test_validate_catches_bad_metric_and_dimension(self):
        g = SpatialGrid.line(-1, 1, 16)
        with pytest.raises(DomainError):
            HamiltonianSpec(metric=lambda q: q).validate(g)
        with pytest.raises(ConfigurationError):
            HamiltonianSpec(dim=2).validate(g)

    def test_with_potential_and_shift(self):
        s = HamiltonianSpec(potential=lambda q: q**2).with_potential(lambda q: q, 3.0).shifted(1.5)
        assert s.potential_at(np.array([2.0]))[0] == pytest.approx(4 + 6 + 1.5)

    def test_compound_adds_potentials_and_keeps_masses(self):
        c = compound(HamiltonianSpec(mass=2.0, potential=lambda q: q**2), HamiltonianSpec(mass=3.0))
        assert c.dim == 2 and c.masses == (2.0, 3.0)
        assert c.potential_at(np.array(1.5), np.array(7.0)) == pytest.approx(2.25)
        with pytest.raises(ConfigurationError):
            compound(HamiltonianSpec(metric=lorentzian()), HamiltonianSpec())


@given(small, small, st.floats(0.2, 5.0))
def test_legendre_pair_is_consistent(q, v, m):
    spec = HamiltonianSpec(mass=m, potential=lambda x: 0.3 * x**2 + x, vector_potential=(lambda x: 0.5 * x,),
                           metric=lorentzian(0.3, m))
    p = classical_momentum(q, v, spec)
    lag = infinitesimal_action(q, v, 1.0, spec)
    assert lag == pytest.approx(p * v - classical_hamiltonian(q, p, spec), rel=1e-10, abs=1e-10)


def test_free_action_is_kinetic_energy_times_dt():
    assert infinitesimal_action(0.0, 2.0, 0.1, HamiltonianSpec(mass=3.0)) == pytest.approx(0.5 * 3 * 4 * 0.1)


def test_action_refuses_points_off_the_grid():
    g = SpatialGrid.line(-1, 1, 16)
    with pytest.raises(DomainError):
        infinitesimal_action(np.array([0.0, 5.0]), np.zeros(2), 0.1, HamiltonianSpec(), g)
    with pytest.raises(DomainError):
        infinitesimal_action(0.0, 0.0, 0.0, HamiltonianSpec())


def test_stochastic_params_validation():
    for bad in ({"lambda_mag": 0}, {"dt": -1}, {"flip_prob": 0}, {"flip_prob": 1.5}, {"seed": -1}):
        with pytest.raises(DomainError):
            StochasticParams(**bad)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_deviation_magnitudes_are_exponential(lam):
    d = sample_deviation(StochasticParams(lambda_mag=lam), 1, Stream(3, 0, Tag.DEVIATION), 100_000)
    assert d.value.mean() == pytest.approx(lam / 2, abs=4 * (lam / 2) / np.sqrt(1e5))
    assert stats.kstest(d.value, "expon", args=(0, lam / 2)).pvalue > 1e-3


@given(st.sampled_from([1, -1]), st.integers(0, 1000))
def test_deviation_carries_the_branch_sign(sign, seed):
    d = sample_deviation(StochasticParams(lambda_mag=2.0), sign, Stream(seed), 64)
    assert d.sign_branch == sign
    assert np.all(d.value * sign >= 0)
    assert isinstance(sample_deviation(StochasticParams(), sign, Stream(seed)).value, float)


def test_deviation_rejects_bad_sign():
    with pytest.raises(ConfigurationError):
        sample_deviation(StochasticParams(), 0, Stream(0))


def test_transition_density_support_and_normalization():
    assert transition_log_density(-0.1, 0.0, 0.01, 1.0) == -np.inf
    assert transition_log_density(0.1, 0.0, 0.01, -1.0) == -np.inf
    assert transition_log_density(0.3, 2.0, 0.1, 1.5) == pytest.approx(-0.4 - 0.2)
    for lam in (1.0, -0.7):
        mass, _ = quad(lambda d: np.exp(transition_log_density(d, 0.0, 0.1, lam)), *sorted((0.0, 40.0 * lam)))
        assert mass == pytest.approx(abs(lam) / 2, rel=1e-8)
    with pytest.raises(DomainError):
        transition_log_density(0.1, 0.0, 0.1, 0.0)


@given(st.floats(0.3, 3.0))
def test_transition_density_decays_with_deviation(lam):
    d = np.linspace(0, 3, 20) * lam
    lp = transition_log_density(d, 0.0, 0.1, lam)
    assert np.all(np.diff(lp) < 0)


class TestTheta:
    grid = SpatialGrid.line(-4, 4, 800)

    def test_methods_agree_with_analytic_divergence(self):
        g = lorentzian(0.2)
        spec = HamiltonianSpec(metric=g)
        q = self.grid.axes[0]
        s_grad = np.sin(q)
        exact = -0.4 * q / (1 + 0.2 * q**2) ** 2 * np.sin(q) + g(q) * np.cos(q)
        inner = slice(5, -5)
        for method in ("divergence", "product", "flux"):
            got = theta(s_grad, spec, self.grid, method)
            assert np.abs(got - exact)[inner].max() < 1e-3, method

    def test_vector_potential_enters_the_kinetic_momentum(self):
        spec = HamiltonianSpec(vector_potential=(lambda q: q,))
        q = self.grid.axes[0]
        assert np.allclose(theta(q, spec, self.grid)[1:-1], 0.0, atol=1e-12)

    def test_rejects_unknown_method_and_shape(self):
        with pytest.raises(ConfigurationError):
            theta(np.zeros(800), HamiltonianSpec(), self.grid, "spectral")
        with pytest.raises(ConfigurationError):
            theta(np.zeros(10), HamiltonianSpec(), self.grid)


def test_total_deviation_quantile_matches_gamma_and_rayleigh():
    u = np.linspace(0.01, 0.99, 50)
    assert np.allclose(_total_deviation_quantile(u, 2.0, "exponential"), stats.gamma.ppf(u, 2, scale=1.0), rtol=1e-10)
    s = 0.5 * np.sqrt(np.pi / 2)
    assert np.allclose(_total_deviation_quantile(u, 1.0, "half_normal"), stats.rayleigh.ppf(u, scale=s), rtol=1e-10)
    with pytest.raises(ConfigurationError):
        _total_deviation_quantile(u, 1.0, "cauchy")


def test_compound_deviation_marginals_are_exponential():
    d1, d2 = sample_compound_deviation(StochasticParams(), 100_000, Stream(9, 0, Tag.FACTORIZATION))
    for d in (d1, d2):
        assert stats.kstest(d, "expon", args=(0, 0.5)).pvalue > 1e-3
    assert abs(np.corrcoef(d1, d2)[0, 1]) < 0.02


def test_factorization_holds_for_exponential_law_only():
    spec = HamiltonianSpec()
    good = verify_factorization(spec, spec, StochasticParams(seed=4), 50_000)
    bad = verify_factorization(spec, spec, StochasticParams(seed=4), 50_000, law="half_normal")
    assert good.tv_joint < 0.02 and good.tv_sweep_max < 0.02
    assert bad.tv_joint > 0.05
    assert json.loads(good.to_json())["n_samples"] == 50_000
    assert len(good.tv_sweep) == 3


def test_factorization_needs_enough_samples():
    with pytest.raises(InsufficientSamplesError):
        verify_factorization(HamiltonianSpec(), HamiltonianSpec(), StochasticParams(), 999)
    with pytest.raises(ConfigurationError):
        verify_factorization(HamiltonianSpec(dim=2), HamiltonianSpec(), StochasticParams(), 5000)
