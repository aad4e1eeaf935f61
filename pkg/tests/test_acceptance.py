"""Acceptance criteria 1-12, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also collected into the
terminal summary) before asserting.  Tolerances and runtime budgets are the
module-level constants below.
"""
import time

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from aeforms.analysis import commutator_singular_values, commutator_stability, form_domain_equivalence, l2_delta_norm
from aeforms.assembly import (
    assemble,
    assemble_h0,
    assemble_h1_weitzenbock,
    jstar_j_minus_identity,
    transcription_defect,
)
from aeforms.config import load_config
from aeforms.geometry import christoffel, curvature
from aeforms.grid import build_grid
from aeforms.metric_models import MetricSpec, check_decay_conditions
from aeforms.runner import run
from aeforms.scattering import WavePacketSpec, make_wave_packet, scattering_diagnostics
from aeforms.spectral import density_of_states, detect_discrete_spectrum, dos_l1_distance, extremal_eigs, flat_reference_gap

from conftest import ACCEPTANCE_LINES, SCENARIOS
from oracles import fd_christoffel, fd_ricci

TRANSCRIPTION_TOL = 1e-12
CONSISTENCY_FACTOR = 1.8
CHRISTOFFEL_TOL = 1e-6
RICCI_TOL = 1e-5
DENSE_EIG_TOL = 1e-9
NEGATIVE_RITZ_TOL = 1e-8
GAP_RTOL = 0.20
DOS_L1_MAX = 0.05
CAUCHY_RATIO = 0.5
ISOMETRY_DEFECT_MAX = 0.05
BOUNDARY_MASS_MAX = 1e-6
PARTIAL_SUM_RTOL = 0.10
FILTER_TOL = 1e-10
FORMS_A_MAX = 2.0

BUDGET = {1: 5, 2: 30, 3: 60, 4: 10, 5: 10, 6: 120, 7: 120, 8: 300, 9: 30, 10: 180, 11: 60, 12: 900}

SHIPPED = [
    MetricSpec("conformal-gaussian", 0.1),
    MetricSpec("conformal-rational", 0.1, decay=2.0),
    MetricSpec("diagonal-rational", 0.1, decay=4.0),
]


def _record(num: int, title: str, checks: dict, elapsed: float, detail: str = "") -> None:
    checks = dict(checks, runtime=elapsed < BUDGET[num])
    ok = all(checks.values())
    failing = [k for k, v in checks.items() if not v]
    line = f"{'PASS' if ok else 'FAIL'} criterion {num:>2} {title}: {detail} [{elapsed:.1f}s < {BUDGET[num]}s]"
    if failing:
        line += " failing: " + ", ".join(failing)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_flat_collapse():
    t0 = time.perf_counter()
    grid = build_grid(2, 8.0, 33)
    spec = MetricSpec("flat", dim=2)
    ops = assemble(spec, grid)
    vol = grid.cell_volume
    pts = grid.interior_coords[::37]
    geo = curvature(spec, pts)
    checks = {
        "V == 0": ops.V.nnz == 0 or not ops.V.toarray().any(),
        "S == h^n H0": (ops.S != vol * ops.H0).nnz == 0,
        "M == h^n I": (ops.M != vol * sp.identity(grid.n_dof)).nnz == 0,
        "J*J == I": not jstar_j_minus_identity(ops).any(),
        "christoffel == 0": not christoffel(spec, pts).any(),
        "ricci == 0": not geo.ricci_lower.any() and not geo.riemann.any(),
    }
    _record(1, "flat collapse", checks, time.perf_counter() - t0, "all identities exact")


def test_criterion_02_transcription_cross_check():
    t0 = time.perf_counter()
    worst = 0.0
    for spec in SHIPPED:
        for n, N in [(1, 9), (1, 33), (2, 9), (2, 17), (2, 33), (3, 9)]:
            grid = build_grid(n, 4.0, N)
            W, V = assemble_h1_weitzenbock(spec.with_dim(n), grid)
            worst = max(worst, transcription_defect(W, assemble_h0(grid), V))
    _record(
        2, "transcription W = H0 + V", {"defect": worst <= TRANSCRIPTION_TOL}, time.perf_counter() - t0,
        f"max relative defect {worst:.2e} <= {TRANSCRIPTION_TOL:g}",
    )


def _smooth_form(x):
    r2 = np.sum(x**2, 1)
    return np.stack([np.exp(-r2) * np.cos(x[:, 1]), np.exp(-r2) * x[:, 0]], -1)


def test_criterion_03_weak_strong_consistency():
    t0 = time.perf_counter()
    spec = MetricSpec("conformal-gaussian", 0.1, dim=2)
    errs = []
    for N in (33, 65):
        grid = build_grid(2, 4.0, N)
        ops = assemble(spec, grid)
        w = grid.sample(_smooth_form)
        diff = (ops.M_inv @ (ops.S @ w) - ops.W @ w).reshape(-1, 2)
        deep = np.all(np.abs(grid.interior_coords) <= 2.0, axis=1)
        errs.append(float(np.abs(diff[deep]).max()))
    factor = errs[0] / errs[1]
    _record(
        3, "weak/strong consistency", {"factor": factor >= CONSISTENCY_FACTOR}, time.perf_counter() - t0,
        f"deep-interior error {errs[0]:.3e} -> {errs[1]:.3e}, factor {factor:.2f} >= {CONSISTENCY_FACTOR}",
    )


def test_criterion_04_geometry_oracles():
    t0 = time.perf_counter()
    specs = SHIPPED + [MetricSpec("diagonal-rational", 0.3, decay=3.0, dim=3)]
    worst_c = worst_r = 0.0
    for i, spec in enumerate(specs):
        pts = np.random.default_rng(100 + i).uniform(-3.0, 3.0, size=(100, spec.dim))
        for x in pts:
            worst_c = max(worst_c, float(np.abs(christoffel(spec, x) - fd_christoffel(spec, x)).max()))
            worst_r = max(worst_r, float(np.abs(curvature(spec, x).ricci_lower - fd_ricci(spec, x)).max()))
    _record(
        4, "geometry oracles",
        {"christoffel": worst_c <= CHRISTOFFEL_TOL, "ricci": worst_r <= RICCI_TOL},
        time.perf_counter() - t0, f"christoffel {worst_c:.1e} <= {CHRISTOFFEL_TOL:g}, ricci {worst_r:.1e} <= {RICCI_TOL:g}",
    )


def test_criterion_05_dense_equivalence():
    t0 = time.perf_counter()
    grid = build_grid(2, 2.0, 7)
    ops = assemble(MetricSpec("conformal-gaussian", 0.1, dim=2), grid)
    D = grid.n_dof
    lo = extremal_eigs(ops, "smallest", D // 2)
    hi = extremal_eigs(ops, "largest", D - D // 2)
    ours = np.sort(np.concatenate([lo.values, hi.values]))
    dense = sla.eigh(ops.S.toarray(), ops.M.toarray(), eigvals_only=True)
    pencil_err = float(np.abs(ours - dense).max())
    line = build_grid(1, 1.0, 5)
    h0 = extremal_eigs(assemble(MetricSpec("flat", dim=1), line), "smallest", 1, operator="H0").values[0]
    oracle = (2.0 - np.sqrt(2.0)) / line.h**2
    _record(
        5, "dense equivalence",
        {"pencil": pencil_err <= DENSE_EIG_TOL, "tridiagonal": abs(h0 - oracle) <= DENSE_EIG_TOL * oracle},
        time.perf_counter() - t0, f"pencil error {pencil_err:.1e}, H0 min {h0:.12f} vs (2-sqrt2)/h^2 {oracle:.12f}",
    )


@pytest.fixture(scope="module")
def gaussian_box():
    grid = build_grid(2, 8.0, 65)
    return grid, assemble(MetricSpec("conformal-gaussian", 0.1, dim=2), grid)


def test_criterion_06_spectral_verdict(gaussian_box):
    t0 = time.perf_counter()
    grid, ops = gaussian_box
    gap = flat_reference_gap(grid)
    v = detect_discrete_spectrum(ops, gap, NEGATIVE_RITZ_TOL, seed=20240601, rtol=GAP_RTOL)
    checks = {
        "no negative Ritz value": min(v.report.values) >= -NEGATIVE_RITZ_TOL,
        "near flat gap": v.relative_deviation <= GAP_RTOL,
        "converged": v.report.converged,
    }
    _record(
        6, "no discrete spectrum proxy", checks, time.perf_counter() - t0,
        f"lowest {v.lowest:.7f} vs flat gap {gap:.7f} (deviation {v.relative_deviation:.2e} <= {GAP_RTOL})",
    )


def test_criterion_07_dos_agreement(gaussian_box):
    t0 = time.perf_counter()
    grid, ops = gaussian_box
    kw = dict(bins=20, probes=32, moments=200, seed=20240601)
    h1 = density_of_states(ops, (0.0, 4.0), **kw)
    h0 = density_of_states(assemble(MetricSpec("flat", dim=2), grid), (0.0, 4.0), **kw)
    dist = dos_l1_distance(h1, h0)
    _record(
        7, "DOS agreement", {"l1": dist < DOS_L1_MAX}, time.perf_counter() - t0,
        f"relative L1 of integrated DOS {dist:.4f} < {DOS_L1_MAX}",
    )


def test_criterion_08_scattering_trend():
    t0 = time.perf_counter()
    grid = build_grid(1, 200.0, 4096)
    ops = assemble(MetricSpec("conformal-gaussian", 0.1, dim=1), grid)
    wp = WavePacketSpec((-50.0,), (1.5,), 10.0)
    times = [10, 20, 30, 40, 50, 60]
    checks, parts = {}, []
    for sign, packet in ((1, wp), (-1, wp.mirrored())):
        d = scattering_diagnostics(ops, make_wave_packet(packet, grid), times, sign=sign)
        tag = "W+" if sign > 0 else "W-"
        checks[f"{tag} cauchy"] = d.cauchy_norms[-1] <= CAUCHY_RATIO * d.cauchy_norms[0]
        checks[f"{tag} defect"] = d.isometry_defects[-1] <= ISOMETRY_DEFECT_MAX
        checks[f"{tag} boundary"] = max(d.boundary_mass) <= BOUNDARY_MASS_MAX
        parts.append(
            f"{tag} cauchy {d.cauchy_norms[0]:.2e}->{d.cauchy_norms[-1]:.2e}, "
            f"defect {d.isometry_defects[-1]:.1e}, boundary {max(d.boundary_mass):.1e}"
        )
    _record(8, "scattering trend", checks, time.perf_counter() - t0, "; ".join(parts))


def test_criterion_09_hypothesis_gates():
    t0 = time.perf_counter()
    gauss = check_decay_conditions(MetricSpec("conformal-gaussian", 0.1, dim=2), 3.0)
    slow = check_decay_conditions(MetricSpec("conformal-rational", 0.1, decay=2.0, dim=2), 3.0)
    fast = check_decay_conditions(MetricSpec("conformal-rational", 0.1, decay=4.0, dim=2), 3.0)
    try:
        l2_delta_norm(lambda r: np.exp(-r), 1.0, 2)
        rejects = False
    except ValueError:
        rejects = True
    divergent = l2_delta_norm(lambda r: (1.0 + r * r) ** -0.25, 0.75, 1)
    checks = {
        "gaussian passes k=n+1": all(r.passed for r in gauss),
        "rational p=2 fails k=3": not all(r.passed for r in slow),
        "rational p=4 passes k=3": all(r.passed for r in fast),
        "delta <= n/2 rejected": rejects,
        "(1+x^2)^(-1/4) divergent": not divergent.convergent,
    }
    _record(9, "hypothesis gates", checks, time.perf_counter() - t0, ", ".join(k for k in checks))


def test_criterion_10_commutator_compactness():
    t0 = time.perf_counter()
    rep = commutator_stability(
        MetricSpec("conformal-gaussian", 0.1, dim=1), 100.0, (512, 768), (0.2, 1.0), 20, margin=0.1, tol=FILTER_TOL
    )
    flat = commutator_singular_values(
        assemble(MetricSpec("flat", dim=1), build_grid(1, 100.0, 512)), (0.2, 1.0), 20, margin=0.1, tol=FILTER_TOL
    )
    checks = {
        "partial sum stable": rep.stability_ratio <= PARTIAL_SUM_RTOL,
        "flat at filter tolerance": max(flat.singular_values) <= FILTER_TOL,
    }
    a, b = rep.partial_sums
    _record(
        10, "commutator compactness proxy", checks, time.perf_counter() - t0,
        f"partial sums {a:.5f} -> {b:.5f} (change {rep.stability_ratio:.4f} <= {PARTIAL_SUM_RTOL}), "
        f"flat max {max(flat.singular_values):.1e}",
    )


def test_criterion_11_form_domain_equivalence():
    t0 = time.perf_counter()
    rep = form_domain_equivalence(MetricSpec("conformal-gaussian", 0.1, dim=2), build_grid(2, 6.0, 49))
    checks = {
        "20 forms": rep.n_forms >= 20,
        "finite": all(np.isfinite(rep.forward + rep.reverse)),
        "forward a < 2": rep.forward[0] < FORMS_A_MAX,
        "reverse a < 2": rep.reverse[0] < FORMS_A_MAX,
    }
    _record(
        11, "form-domain equivalence", checks, time.perf_counter() - t0,
        f"{rep.n_forms} forms, a = {rep.forward[0]:.4f}/{rep.reverse[0]:.4f}, b = {rep.forward[1]:.2g}/{rep.reverse[1]:.2g}",
    )


def test_criterion_12_determinism(flagship_run, tmp_path):
    t0 = time.perf_counter()
    _, first = flagship_run
    run(load_config(SCENARIOS / "flagship.cfg"), tmp_path)
    names = ["verdicts.json", "summary.txt"] + sorted(p.name for p in first.glob("*.csv"))
    same = {n: (first / n).read_bytes() == (tmp_path / n).read_bytes() for n in names}
    _record(12, "determinism", same, time.perf_counter() - t0, f"{len(names)} output files byte-identical on re-run")
