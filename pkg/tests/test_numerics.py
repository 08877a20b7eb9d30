import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochquant.errors import ConfigurationError, DomainError
from stochquant.numerics import (SpatialGrid, cell_mass_cdf, density_bin_masses, face_average, gradient,
                                 inner_product, integrate, interpolate, laplacian_weighted, norm,
                                 second_difference, total_variation)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_grid_spacing_and_nodes():
    g = SpatialGrid.line(0.0, 1.0, 9)
    assert g.spacing[0] == pytest.approx(0.1)
    assert g.axes[0][0] == pytest.approx(0.1) and g.axes[0][-1] == pytest.approx(0.9)
    p = SpatialGrid.line(0.0, 1.0, 10, "periodic")
    assert p.spacing[0] == pytest.approx(0.1)
    assert p.axes[0][0] == 0.0
    assert len(g.faces()) == 10 and len(p.faces()) == 10


@pytest.mark.parametrize("args", [
    (((0.0, 1.0),), (4,)),
    (((1.0, 0.0),), (16,)),
    (((0.0, np.inf),), (16,)),
    (((0, 1), (0, 1), (0, 1)), (8, 8, 8)),
])
def test_grid_rejects_bad_shapes(args):
    with pytest.raises(ConfigurationError):
        SpatialGrid(*args)


def test_grid_rejects_unknown_boundary():
    with pytest.raises(ConfigurationError):
        SpatialGrid.line(0, 1, 16, "absorbing")


def test_contains_uses_node_range():
    g = SpatialGrid.line(0.0, 1.0, 9)
    assert g.contains(0.5) and g.contains(0.1) and not g.contains(0.05)
    g2 = SpatialGrid.plane((0, 1), (0, 2), 9)
    assert g2.contains(np.array([[0.5, 1.0], [0.5, 1.9]])).tolist() == [True, False]


def test_check_rejects_wrong_shape(line):
    with pytest.raises(ConfigurationError):
        gradient(np.zeros(10), line)


@pytest.mark.parametrize("n", [64, 128, 256])
def test_gradient_second_order_periodic(n):
    errs = []
    for m in (n, 2 * n):
        g = SpatialGrid.line(0.0, 2 * np.pi, m, "periodic")
        x = g.axes[0]
        errs.append(np.abs(gradient(np.sin(3 * x), g) - 3 * np.cos(3 * x)).max())
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_second_difference_exact_on_quadratic():
    g = SpatialGrid.line(-1, 1, 33, "periodic")
    x = g.axes[0]
    d2 = second_difference(x**2, g)
    assert np.allclose(d2[1:-1], 2.0)


@given(arrays(np.float64, 24, elements=finite), arrays(np.float64, 24, elements=finite))
def test_gradient_antisymmetric_dirichlet(f, h):
    g = SpatialGrid.line(0, 1, 24)
    lhs = np.dot(f, gradient(h, g))
    rhs = -np.dot(gradient(f, g), h)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)


@given(arrays(np.float64, 20, elements=finite), arrays(np.float64, 20, elements=finite),
       arrays(np.float64, 20, elements=st.floats(0.1, 10.0)), st.sampled_from(["dirichlet", "periodic"]))
def test_weighted_laplacian_symmetric_nonpositive(f, h, w, bc):
    g = SpatialGrid.line(0, 1, 20, bc)
    a = np.dot(f, laplacian_weighted(h, w, g))
    b = np.dot(laplacian_weighted(f, w, g), h)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-3)
    assert np.dot(f, laplacian_weighted(f, w, g)) <= 1e-9 * max(1.0, np.dot(f, f)) * 1e4


def test_weighted_laplacian_matches_constant_case(line):
    x = line.axes[0]
    f = np.exp(-x**2)
    assert np.allclose(laplacian_weighted(f, np.ones_like(x), line), second_difference(f, line))


def test_weighted_laplacian_needs_positive_weight(line):
    with pytest.raises(DomainError):
        laplacian_weighted(np.ones(line.shape), np.zeros(line.shape), line)


def test_face_average_2d_shapes():
    g = SpatialGrid.plane((0, 1), (0, 1), (10, 12))
    w = np.ones(g.shape)
    assert face_average(w, g, 0).shape == (11, 12)
    assert face_average(w, g, 1).shape == (10, 13)


def test_integrate_and_norm(line):
    x = line.axes[0]
    assert integrate(np.exp(-x**2), line) == pytest.approx(np.sqrt(np.pi), rel=1e-10)
    psi = np.exp(-x**2 / 2 + 1j * x) / np.pi**0.25
    assert norm(psi, line) == pytest.approx(1.0, rel=1e-10)
    assert inner_product(psi, 1j * psi, line) == pytest.approx(1j, rel=1e-10)


def test_integrate_2d():
    g = SpatialGrid.plane((-8, 8), (-8, 8), 161)
    x, y = g.mesh()
    assert integrate(np.exp(-x**2 - y**2), g) == pytest.approx(np.pi, rel=1e-9)


@given(arrays(np.float64, 12, elements=st.floats(0, 1)), arrays(np.float64, 12, elements=st.floats(0, 1)))
def test_total_variation_is_a_bounded_metric(p, q):
    p = p + 1e-3
    q = q + 1e-3
    tv = total_variation(p, q)
    assert 0.0 <= tv <= 1.0
    assert tv == pytest.approx(total_variation(q, p))
    assert total_variation(p, 3 * p) == pytest.approx(0.0, abs=1e-12)


def test_total_variation_disjoint_and_errors():
    assert total_variation([1, 0], [0, 1]) == 1.0
    with pytest.raises(ConfigurationError):
        total_variation([1, 0], [1, 0, 0])
    with pytest.raises(ConfigurationError):
        total_variation([0, 0], [1, 0])


def test_cell_mass_cdf_and_bin_masses(line):
    x = line.axes[0]
    rho = np.exp(-x**2) / np.sqrt(np.pi)
    edges, cdf = cell_mass_cdf(rho, line)
    assert len(edges) == len(cdf) == line.shape[0] + 1
    assert cdf[-1] == pytest.approx(1.0, rel=1e-10)
    masses = density_bin_masses(rho, line, np.linspace(-10, 10, 41))
    assert masses.sum() == pytest.approx(1.0, abs=1e-6)
    half = density_bin_masses(rho, line, np.array([-10.0, 0.0, 10.0]))
    assert half[0] == pytest.approx(0.5, abs=1e-3)


@given(st.floats(-5, 5), st.floats(-5, 5), arrays(np.float64, 8, elements=st.floats(-9.9, 9.9)))
def test_interpolate_exact_for_affine_fields(a, b, q):
    g = SpatialGrid.line(-10, 10, 99)
    assert np.allclose(interpolate(a * g.axes[0] + b, g, np.clip(q, *g.node_range[0])), a * np.clip(q, *g.node_range[0]) + b)


def test_interpolate_bilinear_and_periodic():
    g = SpatialGrid.plane((-1, 1), (-1, 1), 21)
    x, y = g.mesh()
    pts = np.array([[0.13, -0.41], [0.5, 0.5]])
    assert np.allclose(interpolate(2 * x - y + x * y, g, pts), 2 * pts[:, 0] - pts[:, 1] + pts[:, 0] * pts[:, 1])
    p = SpatialGrid.line(0, 1, 10, "periodic")
    f = np.arange(10.0)
    assert interpolate(f, p, [0.95]) == pytest.approx(4.5)
    assert interpolate(f, p, [1.05]) == pytest.approx(interpolate(f, p, [0.05]))
