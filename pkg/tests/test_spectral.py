import dataclasses

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from aeforms.analysis import curvature_bound
from aeforms.assembly import assemble
from aeforms.chebyshev import gershgorin_bounds
from aeforms.grid import build_grid
from aeforms.metric_models import MetricSpec
from aeforms.spectral import (
    counting_function,
    density_of_states,
    detect_discrete_spectrum,
    dos_l1_distance,
    exact_moments,
    extremal_eigs,
    filter_idempotence_defect,
    flat_reference_gap,
    kpm_density,
    kpm_moments,
    spectral_filter_apply,
)

SHIPPED = [
    MetricSpec("conformal-gaussian", 0.1),
    MetricSpec("conformal-rational", 0.1, decay=2.0),
    MetricSpec("diagonal-rational", 0.1, decay=4.0),
]


def _dense_pencil(ops):
    return sla.eigh(ops.S.toarray(), ops.M.toarray(), eigvals_only=True)


def test_smallest_flat_eigenvalue_on_five_point_line():
    grid = build_grid(1, 1.0, 5)  # h = 0.5, three interior points
    ops = assemble(MetricSpec("flat", dim=1), grid)
    rep = extremal_eigs(ops, "smallest", 1)
    oracle = np.linalg.eigvalsh(ops.H0.toarray())[0]
    assert oracle == pytest.approx((2 - np.sqrt(2)) / 0.25, abs=1e-12)
    assert rep.values[0] == pytest.approx(oracle, abs=1e-10)
    h0 = extremal_eigs(ops, "smallest", 1, operator="H0")
    assert h0.values[0] == pytest.approx(oracle, abs=1e-10)


def test_full_pencil_spectrum_matches_dense_solve():
    grid = build_grid(2, 2.0, 7)
    ops = assemble(MetricSpec("conformal-gaussian", 0.1), grid)
    D = grid.n_dof
    lo = extremal_eigs(ops, "smallest", D // 2)
    hi = extremal_eigs(ops, "largest", D - D // 2)
    ours = np.sort(np.concatenate([lo.values, hi.values]))
    dense = _dense_pencil(ops)
    assert np.abs(ours - dense).max() <= 1e-9
    assert lo.converged and hi.converged
    assert max(lo.residuals + hi.residuals) <= lo.tol


@pytest.mark.parametrize("spec", SHIPPED, ids=lambda s: s.family)
@pytest.mark.parametrize("n,N", [(1, 9), (2, 9)])
def test_no_negative_pencil_eigenvalues_on_small_grids(spec, n, N):
    grid = build_grid(n, 2.0, N)
    ops = assemble(spec.with_dim(n), grid)
    dense = _dense_pencil(ops)
    assert dense.min() >= -1e-8
    rep = extremal_eigs(ops, "smallest", 3)
    assert min(rep.values) >= -rep.tol
    assert dense.min() >= -curvature_bound(spec.with_dim(n), grid).pencil_floor - 1e-12


@given(st.sampled_from(SHIPPED), st.sampled_from(["smallest", "largest"]), st.integers(1, 5), st.integers(0, 50))
def test_residual_contract(spec, which, count, seed):
    ops = assemble(spec, build_grid(2, 3.0, 11))
    rep = extremal_eigs(ops, which, count, seed=seed)
    assert rep.converged and len(rep.values) == count
    assert all(r <= rep.tol for r in rep.residuals)
    assert all(np.isreal(rep.values))


def test_extremal_eigs_is_deterministic_and_validates():
    ops = assemble(MetricSpec("conformal-rational", 0.1, decay=2.0), build_grid(2, 3.0, 11))
    assert extremal_eigs(ops, "smallest", 4, seed=3).to_dict() == extremal_eigs(ops, "smallest", 4, seed=3).to_dict()
    with pytest.raises(ValueError):
        extremal_eigs(ops, "middle", 2)
    with pytest.raises(ValueError):
        extremal_eigs(ops, "smallest", 0)


def test_non_convergence_yields_flagged_partial_report(monkeypatch):
    import aeforms.spectral as mod

    ops = assemble(MetricSpec("conformal-gaussian", 0.1), build_grid(2, 8.0, 33))
    monkeypatch.setattr(mod, "MAX_RESTARTS", 1)
    rep = extremal_eigs(ops, "smallest", 4, tol=1e-12)
    assert not rep.converged
    assert len(rep.values) <= 4


def _flat_line(N, L=8.0):
    grid = build_grid(1, L, N)
    return grid, assemble(MetricSpec("flat", dim=1), grid)


def test_dos_matches_exact_cosine_counting_function():
    grid, ops = _flat_line(512)
    m = grid.n_dof
    exact_ev = (2 - 2 * np.cos(np.arange(1, m + 1) * np.pi / (m + 1))) / grid.h**2
    top = 4 / grid.h**2
    hist = density_of_states(ops, (0.0, top), bins=40, probes=32, seed=0)
    exact = np.array([np.sum(exact_ev <= e) for e in hist.edges]) / m
    assert dos_l1_distance(hist, exact) < 0.03


def test_doubling_probes_moves_density_toward_dense_oracle():
    grid, ops = _flat_line(64)
    A = ops.H0
    lo, hi = gershgorin_bounds(A)
    ref_mu = exact_moments(np.linalg.eigvalsh(A.toarray()), 200, lo, hi)
    E = np.linspace(lo, hi, 402)[1:-1]
    ref = kpm_density(ref_mu, E, lo, hi)
    wins = 0
    for seed in range(10):
        dev = [np.abs(kpm_density(kpm_moments(A, 200, p, seed, lo, hi), E, lo, hi) - ref).sum() for p in (16, 32)]
        wins += dev[1] < dev[0]
    assert wins >= 8


def test_dos_of_curved_line_close_to_flat_against_dense_oracle():
    grid = build_grid(1, 8.0, 64)
    ops = assemble(MetricSpec("conformal-gaussian", 0.1, dim=1), grid)
    flat = assemble(MetricSpec("flat", dim=1), grid)
    edges = np.linspace(0, 4, 21)
    dense = np.array([np.sum(_dense_pencil(ops) <= e) for e in edges]) / grid.n_dof
    dense_flat = np.array([np.sum(np.linalg.eigvalsh(flat.H0.toarray()) <= e) for e in edges]) / grid.n_dof
    assert dos_l1_distance(dense, dense_flat) < 0.05
    est = density_of_states(ops, (0, 4), 20, 32, 0)
    est_flat = density_of_states(flat, (0, 4), 20, 32, 0)
    assert dos_l1_distance(est, est_flat) < 0.05


@given(st.integers(0, 10_000), st.sampled_from([8, 16, 32]))
def test_dos_histogram_invariants(seed, probes):
    grid = build_grid(2, 3.0, 9)
    ops = assemble(MetricSpec("diagonal-rational", 0.3, decay=2.0), grid)
    lo, hi = gershgorin_bounds(ops.A_sym)
    hist = density_of_states(ops, (max(lo, 0.0), hi), bins=10, probes=probes, seed=seed, moments=60)
    assert hist.bins.min() >= -1e-12
    assert hist.bins.sum() <= 1 + 1e-12
    assert hist.seed == seed and hist.probes == probes


def test_dos_input_errors():
    grid, ops = _flat_line(32)
    with pytest.raises(ValueError):
        density_of_states(ops, (0, 1), probes=4)
    with pytest.raises(ValueError):
        density_of_states(ops, (0, 1e6))
    with pytest.raises(ValueError):
        density_of_states(ops, (1, 1))


def test_counting_function_of_exact_moments_is_monotone():
    ev = np.linspace(0.1, 3.9, 50)
    mu = exact_moments(ev, 120, 0.0, 4.0)
    F = counting_function(mu, np.linspace(0, 4, 81), 0.0, 4.0)
    assert np.all(np.diff(F) >= -1e-12)
    assert F[0] == pytest.approx(0, abs=1e-12) and F[-1] == pytest.approx(1, abs=1e-12)


# -- filters ----------------------------------------------------------------------------


def test_filter_over_whole_range_is_identity_and_below_is_empty():
    grid, ops = _flat_line(64)
    lo, hi = gershgorin_bounds(ops.A_sym)
    v = np.random.default_rng(0).standard_normal(grid.n_dof)
    margin = 0.02 * (hi - lo)
    full = spectral_filter_apply(ops, (lo - margin, hi + margin), v)
    assert np.linalg.norm(full - v) <= 1e-10 * np.linalg.norm(v)
    empty = spectral_filter_apply(ops, (lo - 3 * margin, lo - margin), v)
    assert np.linalg.norm(empty) <= 1e-10 * np.linalg.norm(v)


def _gap_interval(ev, i, j):
    a = 0.5 * (ev[i - 1] + ev[i])
    b = 0.5 * (ev[j] + ev[j + 1])
    half_gap = min(ev[i] - ev[i - 1], ev[j + 1] - ev[j]) / 2
    return (a, b), half_gap


def test_filter_matches_dense_eigenprojector():
    grid, ops = _flat_line(64)
    ev, U = np.linalg.eigh(ops.H0.toarray())
    (a, b), _ = _gap_interval(ev, 10, 30)
    v = np.random.default_rng(1).standard_normal(grid.n_dof)
    sel = (ev >= a) & (ev <= b)
    exact = U[:, sel] @ (U[:, sel].T @ v)
    for operator in ("H0", "H1"):
        approx = spectral_filter_apply(ops, (a, b), v, operator=operator)
        assert np.linalg.norm(approx - exact) <= 0.02 * np.linalg.norm(exact)


def test_filter_idempotent_when_endpoints_sit_in_gaps():
    grid, ops = _flat_line(64)
    ev = np.linalg.eigvalsh(ops.H0.toarray())
    (a, b), half_gap = _gap_interval(ev, 10, 30)
    v = np.random.default_rng(2).standard_normal(grid.n_dof)
    assert filter_idempotence_defect(ops, (a, b), v, margin=0.9 * half_gap) <= 1e-10


def test_filter_rejects_degenerate_interval():
    grid, ops = _flat_line(16)
    with pytest.raises(ValueError):
        spectral_filter_apply(ops, (1.0, 1.0), np.ones(grid.n_dof))


# -- discrete spectrum verdict ----------------------------------------------------------


def test_flat_discrete_spectrum_verdict_is_trivially_pass():
    grid = build_grid(2, 4.0, 17)
    ops = assemble(MetricSpec("flat"), grid)
    gap = flat_reference_gap(grid)
    v = detect_discrete_spectrum(ops, gap)
    assert v.passed and v.lowest == pytest.approx(gap, rel=1e-10)
    analytic = 2 * (2 - 2 * np.cos(np.pi / 16)) / grid.h**2
    assert gap == pytest.approx(analytic, rel=1e-10)


def _doctored(ops, depth=10.0):
    grid = ops.grid
    near = np.argsort(np.linalg.norm(grid.interior_coords, axis=1))[:4]
    diag = np.zeros(grid.n_dof)
    for p in near:
        diag[p * grid.n : (p + 1) * grid.n] = -depth * grid.cell_volume
    return dataclasses.replace(ops, S=(ops.S + sp.diags(diag)).tocsr())


def test_artificial_potential_well_produces_fail():
    grid = build_grid(2, 4.0, 9)
    ops = assemble(MetricSpec("conformal-gaussian", 0.1), grid)
    bad = _doctored(ops)
    assert _dense_pencil(bad).min() < 0
    v = detect_discrete_spectrum(bad, flat_reference_gap(grid))
    assert not v.passed and v.negative_values
    assert v.negative_values[0] == pytest.approx(_dense_pencil(bad).min(), rel=1e-8)
