import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from aeforms.chebyshev import (
    ExpansionError,
    cheb_apply,
    chebyshev_coefficients,
    gershgorin_bounds,
    jackson_kernel,
    propagator_coefficients,
    smooth_indicator,
)


def _random_symmetric(seed, m=30):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, m))
    return sp.csr_matrix(A + A.T)


@given(st.integers(0, 1000))
def test_gershgorin_bounds_enclose_spectrum(seed):
    A = _random_symmetric(seed)
    lo, hi = gershgorin_bounds(A)
    ev = np.linalg.eigvalsh(A.toarray())
    assert lo <= ev.min() and ev.max() <= hi


def test_function_of_matrix_matches_dense_oracle():
    A = _random_symmetric(1)
    lo, hi = gershgorin_bounds(A)
    c = chebyshev_coefficients(np.cos, lo, hi, tol=1e-14)
    v = np.random.default_rng(2).standard_normal(30)
    ev, U = np.linalg.eigh(A.toarray())
    expect = U @ (np.cos(ev) * (U.T @ v))
    assert np.linalg.norm(cheb_apply(A, v, c, lo, hi) - expect) <= 1e-11 * np.linalg.norm(v)


@pytest.mark.parametrize("t", [0.3, 2.0, -5.0, 40.0])
def test_propagator_matches_matrix_exponential(t):
    A = _random_symmetric(3, 20)
    lo, hi = gershgorin_bounds(A)
    tol = 1e-10
    coeffs, bound = propagator_coefficients(t, lo, hi, tol)
    assert bound <= tol
    v = np.random.default_rng(4).standard_normal(20)
    expect = sla.expm(-1j * t * A.toarray()) @ v
    assert np.linalg.norm(cheb_apply(A, v, coeffs, lo, hi) - expect) <= 10 * tol * np.linalg.norm(v)


def test_propagator_term_cap_reports_bound():
    with pytest.raises(ExpansionError) as info:
        propagator_coefficients(1e4, -1.0, 1.0, 1e-10, max_terms=100)
    assert info.value.achieved > 1e-10


def test_coefficient_cap_raises():
    with pytest.raises(ExpansionError):
        chebyshev_coefficients(smooth_indicator(0.0, 0.5, 1e-6), -1, 1, tol=1e-12, max_degree=256)


def test_jackson_kernel_shape():
    g = jackson_kernel(200)
    assert g[0] == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(g) < 0) and g[-1] > 0
