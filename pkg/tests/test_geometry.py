import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aeforms.geometry import christoffel, covariant_derivative, curvature, perturbation_coefficients
from aeforms.grid import build_grid
from aeforms.metric_models import MetricSpec
from oracles import fd_christoffel, fd_ricci

FAMILY_SPECS = [
    MetricSpec("conformal-gaussian", 0.1, dim=2),
    MetricSpec("conformal-rational", 0.5, decay=2.0, dim=2),
    MetricSpec("diagonal-rational", 0.3, decay=3.0, dim=2),
    MetricSpec("diagonal-rational", 0.3, decay=3.0, dim=3),
]


@pytest.mark.parametrize("spec", FAMILY_SPECS, ids=lambda s: f"{s.family}-{s.dim}")
def test_christoffel_and_ricci_against_finite_differences(spec):
    pts = np.random.default_rng(11).uniform(-2.0, 2.0, size=(20, spec.dim))
    for x in pts:
        assert np.abs(christoffel(spec, x) - fd_christoffel(spec, x)).max() <= 1e-6
        assert np.abs(curvature(spec, x).ricci_lower - fd_ricci(spec, x)).max() <= 1e-5


def test_two_dimensional_conformal_ricci_is_gauss_curvature_times_metric():
    # g = exp(2 phi) delta with phi = a exp(-|x|^2); K = -exp(-2 phi) Laplacian(phi)
    a = 0.1
    spec = MetricSpec("conformal-gaussian", a, dim=2)
    for x in np.random.default_rng(5).uniform(-1.5, 1.5, size=(10, 2)):
        s = x @ x
        phi = a * np.exp(-s)
        lap = a * np.exp(-s) * (4 * s - 4)
        K = -np.exp(-2 * phi) * lap
        geo = curvature(spec, x)
        assert np.allclose(geo.ricci_lower, K * np.exp(2 * phi) * np.eye(2), atol=1e-13)
        assert np.allclose(geo.ricci_mixed, K * np.eye(2), atol=1e-13)


def test_flat_geometry_vanishes():
    spec = MetricSpec("flat", dim=3)
    x = np.random.default_rng(0).standard_normal((7, 3))
    geo = curvature(spec, x)
    for arr in (geo.christoffel, geo.riemann, geo.ricci_mixed, geo.ricci_upper):
        assert not arr.any()
    for arr in perturbation_coefficients(spec, x).groups().values():
        assert not np.any(arr)


@given(st.sampled_from(FAMILY_SPECS), st.integers(0, 10_000))
def test_curvature_symmetries(spec, seed):
    x = np.random.default_rng(seed).uniform(-3, 3, size=spec.dim)
    geo = curvature(spec, x)
    assert np.allclose(geo.ricci_lower, geo.ricci_lower.T, atol=1e-14)
    assert np.allclose(geo.ricci_upper, geo.ricci_upper.T, atol=1e-14)
    # Riemann antisymmetric in its last two indices, Christoffel symmetric in the lower pair
    assert np.allclose(geo.riemann, -np.swapaxes(geo.riemann, -1, -2), atol=1e-14)
    assert np.allclose(geo.christoffel, np.swapaxes(geo.christoffel, -1, -2), atol=0)


def test_covariant_derivative_flat_is_central_difference():
    grid = build_grid(2, 1.0, 9)
    rng = np.random.default_rng(1)
    vec = rng.standard_normal(grid.n_dof)
    field = grid.from_interior(vec)
    nab = covariant_derivative(MetricSpec("flat", dim=2), grid, field)
    full = field.reshape(-1, 2)
    p = grid.interior_points[0]
    expect0 = (full[p + grid.strides[0]] - full[p - grid.strides[0]]) / (2 * grid.h)
    assert np.allclose(nab[0, 0], expect0)


def test_covariant_derivative_of_exact_form_is_hessian():
    # omega = d f is closed, so nabla_i omega_k is symmetric (the covariant Hessian)
    spec = MetricSpec("conformal-gaussian", 0.2, dim=2)
    grid = build_grid(2, 2.0, 81)
    x = grid.coords
    f_grad = np.stack([np.cos(x[:, 0]) * np.exp(-x[:, 1] ** 2), -2 * x[:, 1] * np.sin(x[:, 0]) * np.exp(-x[:, 1] ** 2)], -1)
    f_grad[~grid.interior_mask] = 0
    nab = covariant_derivative(spec, grid, f_grad.reshape(grid.shape + (2,)))
    deep = np.all(np.abs(grid.interior_coords) < 1.0, axis=1)
    asym = np.abs(nab[deep] - np.swapaxes(nab[deep], 1, 2)).max()
    assert asym < 5e-3
