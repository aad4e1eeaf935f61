"""Execute the tasks of a run configuration and collect verdicts."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    bump_form_family,
    coefficient_decay_audit,
    commutator_stability,
    curvature_bound,
    form_domain_equivalence,
)
from .analysis import COMMUTATOR_DECAY_RATIO, COMMUTATOR_STABILITY_MAX, FORMS_A_MAX, FORMS_CONSISTENCY_RTOL
from .assembly import assemble
from .config import RunConfig
from .grid import build_grid
from .metric_models import MetricSpec, check_decay_conditions, metric_band
from .report import Verdict, VerdictBundle, write_bundle
from .scattering import (
    BOUNDARY_MASS_CAP,
    CAUCHY_RATIO,
    ISOMETRY_DEFECT_MAX,
    WavePacketSpec,
    make_wave_packet,
    scattering_diagnostics,
)
from .spectral import density_of_states, detect_discrete_spectrum, dos_l1_distance, extremal_eigs
from .triplets import write_triplets

log = logging.getLogger(__name__)

PRIMARY_CONDITION = {
    "check-metric": "decay-1",
    "spectrum": "no-discrete-spectrum",
    "dos": "ac-spectrum",
    "scatter": "wave-operators",
    "forms": "condition-4",
    "tracecheck": "condition-2",
}
DECAY_CONDITION_NAMES = {"bounded-contravariant-derivative": "decay-contravariant"}


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _grid(cfg: RunConfig, task: str):
    g = cfg.task_grid(task)
    return build_grid(g.n, g.half_width, g.points)


def _task_check_metric(cfg: RunConfig, tables: dict, out_dir):
    grid = _grid(cfg, "check-metric")
    spec = cfg.metric_spec(grid.n)
    k = cfg["metric.k_decay"]
    seed = cfg.task_seed("check-metric")
    radii = cfg["check-metric.radii"]
    verdicts = []
    rows = []
    for rep in check_decay_conditions(spec, k, radii, seed=seed):
        cond = DECAY_CONDITION_NAMES.get(rep.condition, rep.condition)
        verdicts.append(
            Verdict(
                "check-metric",
                cond,
                _status(rep.passed),
                {"slope": rep.slope, "k_claimed": rep.k_decay},
                f"slope <= {-rep.k_decay + rep.tolerance:g}",
                rep.quantity,
            )
        )
        rows += [(cond, rep.quantity, r, v) for r, v in zip(rep.radii, rep.max_values)]
    band = metric_band(spec, cfg["check-metric.band_samples"], radius=grid.half_width, seed=seed)
    ok = all(np.isfinite([band.C, band.C1, band.D, band.D1])) and band.C > 0 and band.D > 0
    verdicts.append(
        Verdict(
            "check-metric",
            "condition-1",
            _status(ok),
            {"C": band.C, "C1": band.C1, "D": band.D, "D1": band.D1},
            "0 < C <= C1 < inf and 0 < D <= D1 < inf",
            "J bounded with bounded inverse",
        )
    )
    audit = coefficient_decay_audit(spec, k, radii, seed=seed)
    failing = [r.quantity for r in audit if not (r.passed and r.l2_delta.convergent)]
    verdicts.append(
        Verdict(
            "check-metric",
            "lemma-f",
            _status(not failing),
            {
                "groups": len(audit),
                "failing": failing,
                "worst_slope": max(r.slope for r in audit),
                "delta": audit[0].l2_delta.delta,
            },
            f"every coefficient group decays with slope <= -{k:g} + 0.2 and lies in L^2_delta",
        )
    )
    rows += [("lemma-f", r.quantity, rr, v) for r in audit for rr, v in zip(r.radii, r.max_values)]
    tables["decay"] = rows
    return verdicts


def _task_spectrum(cfg: RunConfig, tables: dict, out_dir):
    grid = _grid(cfg, "spectrum")
    spec = cfg.metric_spec(grid.n)
    tol, count, seed = cfg["spectrum.tol"], cfg["spectrum.count"], cfg.task_seed("spectrum")
    ops = assemble(spec, grid)
    flat = assemble(MetricSpec("flat", dim=grid.n), grid)
    flat_rep = extremal_eigs(flat, "smallest", count, tol, seed=seed)
    res = detect_discrete_spectrum(ops, flat_rep.values[0], tol, count=count, seed=seed, rtol=cfg["spectrum.rtol"])
    rows = [("H1", i, v, r) for i, (v, r) in enumerate(zip(res.report.values, res.report.residuals))]
    rows += [("flat", i, v, r) for i, (v, r) in enumerate(zip(flat_rep.values, flat_rep.residuals))]
    tables["eigenvalues"] = rows
    if cfg["output.dump_operators"] and out_dir is not None:
        op_dir = Path(out_dir) / "operators"
        op_dir.mkdir(parents=True, exist_ok=True)
        for name in ("H0", "M", "S", "V"):
            write_triplets(op_dir / f"{name}.txt", getattr(ops, name))
    return [
        Verdict(
            "spectrum",
            "no-discrete-spectrum",
            _status(res.passed and res.report.converged),
            {
                "lowest": res.lowest,
                "flat_gap": res.flat_reference_gap,
                "relative_deviation": res.relative_deviation,
                "negative_values": res.negative_values,
                "max_residual": max(res.report.residuals),
                "converged": res.report.converged,
            },
            f"no value < -{tol:g}, |lowest - flat_gap| <= {cfg['spectrum.rtol']:g} flat_gap, residuals <= {tol:g}",
            "finite-box proxy relative to the flat Dirichlet gap",
        )
    ]


def _task_dos(cfg: RunConfig, tables: dict, out_dir):
    grid = _grid(cfg, "dos")
    spec = cfg.metric_spec(grid.n)
    seed = cfg.task_seed("dos")
    kw = dict(bins=cfg["dos.bins"], probes=cfg["dos.probes"], seed=seed, moments=cfg["dos.moments"])
    interval = tuple(cfg["dos.interval"])
    h1 = density_of_states(assemble(spec, grid), interval, **kw)
    h0 = density_of_states(assemble(MetricSpec("flat", dim=grid.n), grid), interval, **kw)
    dist = dos_l1_distance(h1, h0)
    tables["dos"] = [
        (float(lo), float(hi), float(a), float(b))
        for lo, hi, a, b in zip(h1.edges[:-1], h1.edges[1:], h1.bins, h0.bins)
    ]
    thr = cfg["dos.threshold"]
    return [
        Verdict(
            "dos",
            "ac-spectrum",
            _status(dist < thr),
            {"l1_distance": dist, "idos_metric": float(h1.counting[-1]), "idos_flat": float(h0.counting[-1])},
            f"relative L1 distance of counting functions < {thr:g}",
            f"{kw['probes']} probes, {kw['moments']} moments",
        )
    ]


def _task_scatter(cfg: RunConfig, tables: dict, out_dir):
    grid = _grid(cfg, "scatter")
    spec = cfg.metric_spec(grid.n)
    pol = cfg["scatter.polarization"]
    wp = WavePacketSpec(
        tuple(cfg["scatter.center"]), tuple(cfg["scatter.momentum"]), cfg["scatter.width"], None if pol is None else tuple(pol)
    )
    ops = assemble(spec, grid)
    times, tol = cfg["scatter.times"], cfg["scatter.tol"]
    try:
        hypotheses = all(r.passed for r in check_decay_conditions(spec, cfg["metric.k_decay"])[:3])
    except ValueError:
        hypotheses = False
    runs = [(1, wp)]
    if cfg["scatter.mirrored"]:
        runs.append((-1, wp.mirrored()))
    verdicts, rows = [], []
    for sign, packet in runs:
        psi = make_wave_packet(packet, grid)
        d = scattering_diagnostics(ops, psi, times, tol, sign=sign)
        rows += [
            (sign, t, None if j == 0 else d.cauchy_norms[j - 1], d.isometry_defects[j], d.boundary_mass[j])
            for j, t in enumerate(d.times)
        ]
        label = "W+" if sign > 0 else "W-"
        verdicts.append(
            Verdict(
                "scatter",
                "wave-operators",
                d.verdict,
                {
                    "first_cauchy": d.cauchy_norms[0],
                    "last_cauchy": d.cauchy_norms[-1],
                    "final_isometry_defect": d.isometry_defects[-1],
                    "max_boundary_mass": max(d.boundary_mass),
                    "norm_band": list(d.norm_band),
                    "decay_hypotheses_hold": hypotheses,
                },
                f"last <= {CAUCHY_RATIO:g} first, defect <= {ISOMETRY_DEFECT_MAX:g}, boundary mass <= {BOUNDARY_MASS_CAP:g}",
                label,
            )
        )
    tables["scattering"] = rows
    return verdicts


def _task_forms(cfg: RunConfig, tables: dict, out_dir):
    grid = _grid(cfg, "forms")
    spec = cfg.metric_spec(grid.n)
    ops = assemble(spec, grid)
    forms = bump_form_family(grid, cfg.task_seed("forms"), cfg["forms.n_centers"])
    fe = form_domain_equivalence(spec, grid, forms, ops=ops)
    cb = curvature_bound(spec, grid)
    worst = max(f.consistency for f in fe.forms)
    curv_ratio = max(abs(f.h1_curvature) / f.norm_sq for f in fe.forms)
    tables["forms"] = [(f.form_id, f.h0, f.h1, f.h1_gradient, f.h1_curvature, f.norm_sq) for f in fe.forms]
    return [
        Verdict(
            "forms",
            "condition-4",
            _status(fe.passed and worst <= FORMS_CONSISTENCY_RTOL),
            {"a": fe.forward[0], "b": fe.forward[1], "a_reverse": fe.reverse[0], "b_reverse": fe.reverse[1],
             "n_forms": fe.n_forms, "quadrature_vs_stiffness": worst},
            f"finite constants with a <= {FORMS_A_MAX:g} both ways; quadrature matches stiffness to {FORMS_CONSISTENCY_RTOL:g}",
        ),
        Verdict(
            "forms",
            "eq-curvature",
            _status(curv_ratio <= cb.euclidean * (1 + 1e-12) + 1e-300),
            {"C_R": cb.euclidean, "max_curvature_ratio": curv_ratio, "pencil_floor": cb.pencil_floor},
            "|curvature part| <= C_R ||w||^2 for every form",
        ),
    ]


def _task_tracecheck(cfg: RunConfig, tables: dict, out_dir):
    n = cfg["tracecheck.n"]
    spec = cfg.metric_spec(n)
    tol = cfg["tracecheck.tol"]
    rep = commutator_stability(
        spec,
        cfg["tracecheck.half_width"],
        tuple(cfg["tracecheck.points"]),
        tuple(cfg["tracecheck.interval"]),
        cfg["tracecheck.rank"],
        margin=cfg["tracecheck.margin"],
        tol=tol,
        seed=cfg.task_seed("tracecheck"),
    )
    tables["commutator"] = [
        (i, s, sj) for i, (s, sj) in enumerate(zip(rep.singular_values, rep.jstar_singular_values))
    ]
    sj = rep.jstar_singular_values
    j_ok = max(sj) <= tol or sj[-1] <= COMMUTATOR_DECAY_RATIO * sj[0]
    return [
        Verdict(
            "tracecheck",
            "condition-2",
            _status(bool(rep.passed)),
            {"partial_sums": rep.partial_sums, "stability_ratio": rep.stability_ratio,
             "s_first": rep.singular_values[0], "s_last": rep.singular_values[-1]},
            f"stability ratio <= {COMMUTATOR_STABILITY_MAX:g} and s_last <= {COMMUTATOR_DECAY_RATIO:g} s_first, or all s <= {tol:g}",
            f"grids {rep.grid_points[0]} -> {rep.grid_points[1]}, filter degrees {rep.filter_degrees[0]}/{rep.filter_degrees[1]}",
        ),
        Verdict(
            "tracecheck",
            "condition-3",
            _status(bool(j_ok)),
            {"s_first": sj[0], "s_last": sj[-1]},
            f"s_last <= {COMMUTATOR_DECAY_RATIO:g} s_first, or all s <= {tol:g}",
            "(J*J - I) E_I(H0)",
        ),
    ]


TASK_RUNNERS = {
    "check-metric": _task_check_metric,
    "spectrum": _task_spectrum,
    "dos": _task_dos,
    "scatter": _task_scatter,
    "forms": _task_forms,
    "tracecheck": _task_tracecheck,
}


def run(cfg: RunConfig, out_dir=None) -> VerdictBundle:
    """Run the configured tasks in dependency order.

    A task that raises records a FAIL verdict carrying the error; the
    remaining tasks still run.  With ``out_dir`` the bundle, summary and
    tables are written there.
    """
    bundle = VerdictBundle(toolkit_version=__version__, config_hash=cfg.hash, seed=cfg["seed"])
    for task in cfg.tasks:
        log.info("running task %s", task)
        try:
            bundle.verdicts += TASK_RUNNERS[task](cfg, bundle.tables, out_dir)
        except Exception as exc:  # recorded as a verdict; the run continues
            log.exception("task %s failed", task)
            bundle.verdicts.append(
                Verdict(task, PRIMARY_CONDITION[task], "FAIL", {}, "task completes", f"{type(exc).__name__}: {exc}")
            )
    if out_dir is not None:
        write_bundle(bundle, out_dir)
    return bundle
