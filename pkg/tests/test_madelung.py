import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochquant.action import HamiltonianSpec
from stochquant.errors import ConfigurationError, DegenerateStateError
from stochquant.madelung import (actual_velocity, advection_fields, bohmian_velocity, continuity_residual, decompose,
                                 density_identity_residual, fill_nodes, hj_residual, osmotic_term,
                                 probability_current, quantum_potential)
from stochquant.numerics import SpatialGrid
from stochquant.solver import WaveFunction, build_hamiltonian, evolve
from stochquant.states import gaussian, oscillator_eigenstate, plane_wave, vortex

harmonic = HamiltonianSpec(potential=lambda q: 0.5 * q**2)
LINE = SpatialGrid.line(-10, 10, 1999)
CORE = np.abs(LINE.axes[0]) < 3


def test_plane_wave_phase_gradient_is_the_discrete_wavenumber():
    g = SpatialGrid.line(0, 2 * np.pi, 256, "periodic")
    h = decompose(plane_wave(g, 5.0, lambda_mag=0.5))
    dx = g.spacing[0]
    assert np.allclose(h.s_grad[0], 0.5 * np.sin(10 * dx) / dx)  # wavenumber p / lambda
    assert np.allclose(h.rho_grad_ratio[0], 0.0, atol=1e-12)
    assert not h.node_mask.any()


@given(st.floats(-2, 2), st.floats(0.6, 1.5), st.floats(-2, 2), st.floats(0.5, 2.0))
def test_gaussian_fields_match_closed_forms(c, s, k, lam):
    wf = gaussian(LINE, c, s, k, lambda_mag=lam)
    h = decompose(wf)
    q = LINE.axes[0]
    core = np.abs(q - c) < 2.5 * s
    assert np.allclose(h.s_grad[0][core], k, atol=2e-3)
    damping = np.cos(k / lam * LINE.spacing[0])  # central difference of the carrier wave
    assert np.allclose(h.rho_grad_ratio[0][core], -damping * (q - c)[core] / s**2, atol=2e-3)
    expect_q = lam**2 / 2 * (1 / (2 * s**2) - (q - c) ** 2 / (4 * s**4))
    assert np.allclose(quantum_potential(h, HamiltonianSpec())[core], expect_q[core], atol=2e-3)


def test_branch_velocities_average_to_the_guidance_velocity():
    h = decompose(gaussian(LINE, 0.5, 1.0, 1.0))
    spec = HamiltonianSpec(mass=2.0)
    up = actual_velocity(h, spec, 1)
    dn = actual_velocity(h, spec, -1)
    ok = ~h.node_mask
    assert np.isnan(up[0][~ok]).all()
    assert np.allclose(0.5 * (up + dn)[0][ok], bohmian_velocity(h, spec)[0][ok])
    assert np.allclose(0.5 * (up - dn)[0][ok], osmotic_term(h, 1.0)[0][ok] / 2.0)
    with pytest.raises(ConfigurationError):
        actual_velocity(h, spec, 0)


def test_nodes_are_masked_and_filled():
    g = SpatialGrid.line(-5, 5, 99)  # node at q = 0 exactly
    h = decompose(oscillator_eigenstate(g, 1))
    mid = np.argmin(np.abs(g.axes[0]))
    assert h.node_mask[mid] and np.isnan(h.s_grad[0, mid])
    f = h.filled()
    assert np.all(np.isfinite(f.s_grad)) and np.all(np.isfinite(f.rho_grad_ratio))
    vb, w = advection_fields(h, harmonic)
    assert np.all(np.isfinite(vb)) and np.all(np.isfinite(w))
    assert vb.flags.c_contiguous


def test_fill_nodes_nearest_and_all_masked():
    f = np.array([1.0, np.nan, np.nan, 4.0])
    mask = np.isnan(f)
    assert fill_nodes(f, mask).tolist() == [1.0, 1.0, 4.0, 4.0]
    with pytest.raises(DegenerateStateError):
        fill_nodes(f, np.ones(4, bool))


def test_decompose_rejects_zero_and_unnormalized_states():
    with pytest.raises(DegenerateStateError):
        decompose(WaveFunction(np.zeros(LINE.shape), LINE))
    with pytest.raises(ConfigurationError):
        decompose(WaveFunction(2 * gaussian(LINE).psi, LINE))


def test_vortex_has_quantized_circulation():
    g = SpatialGrid.plane((-6, 6), (-6, 6), 241)
    h = decompose(vortex(g, 1.0, 1))
    x, y = g.mesh()
    r = 1.5
    theta = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    from stochquant.numerics import interpolate

    pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    sx = interpolate(h.filled().s_grad[0], g, pts)
    sy = interpolate(h.filled().s_grad[1], g, pts)
    circ = np.sum(-sx * np.sin(theta) + sy * np.cos(theta)) * r * (2 * np.pi / 400)
    assert circ == pytest.approx(2 * np.pi, rel=1e-3)


@pytest.mark.parametrize("spec,state", [
    (HamiltonianSpec(), lambda: gaussian(LINE, 0.0, 1.0, 0.8)),
    (harmonic, lambda: gaussian(LINE, 1.0, 0.7)),
])
def test_continuity_and_hamilton_jacobi_hold_along_the_flow(spec, state):
    ham = build_hamiltonian(spec, LINE)
    dt = 1e-3
    prev, mid, nxt = evolve(state(), ham, 0.5, dt, [0.5 - 2 * dt, 0.5 - dt, 0.5])
    cont = continuity_residual(prev, mid, nxt, dt, spec)
    assert np.abs(cont).max() < 1e-4
    hj = hj_residual(prev, mid, nxt, dt, spec)
    assert np.nanmax(np.abs(hj[CORE])) < 2e-3


def test_current_is_density_times_guidance_velocity():
    wf = gaussian(LINE, 0.0, 1.0, 1.5)
    h = decompose(wf)
    spec = HamiltonianSpec(mass=3.0)
    ok = ~h.node_mask
    j = probability_current(wf, spec)[0]
    assert np.all(np.isfinite(j))
    assert np.allclose(j[ok], (h.rho * bohmian_velocity(h, spec))[0][ok], atol=1e-14)


def test_density_identity_converges_to_zero():
    errs = []
    for n in (400, 800):
        g = SpatialGrid.line(-8, 8, n)
        rho = gaussian(g, 0.3, 0.9).density
        res = density_identity_residual(rho, g)
        errs.append(np.nanmax(np.abs(res[np.abs(g.axes[0]) < 2.5])))
    assert errs[1] < 1e-2 and errs[0] / errs[1] > 3.0


def test_hydro_csv(tmp_path):
    h = decompose(gaussian(SpatialGrid.line(-5, 5, 40)))
    h.to_csv(tmp_path / "h.csv")
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "q,rho,s_grad,mask" and len(rows) == 41
