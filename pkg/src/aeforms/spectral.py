"""Extremal eigenvalues, density of states and spectral filters.

Everything here runs on the symmetric reduction ``A = M^{-1/2} S M^{-1/2}`` of
the pencil ``(S, M)`` (``operator="H1"``) or on the flat ``H0``
(``operator="H0"``).  Eigenvalues are in 1/length^2 throughout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import AssembledOperators
from .chebyshev import (
    cheb_apply,
    chebyshev_coefficients,
    gershgorin_bounds,
    jackson_kernel,
    smooth_indicator,
)

log = logging.getLogger(__name__)

DEFAULT_EIG_TOL = 1e-8
MAX_RESTARTS = 500
FILTER_MARGIN = 0.02
DISCRETE_SPECTRUM_RTOL = 0.20


@dataclass
class SpectralReport:
    which: str
    count: int
    values: list[float]
    residuals: list[float]
    matvecs: int
    converged: bool
    tol: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "count": self.count,
            "values": list(self.values),
            "residuals": list(self.residuals),
            "matvecs": self.matvecs,
            "converged": self.converged,
            "tol": self.tol,
            "provenance": self.provenance,
        }


@dataclass
class DOSHistogram:
    interval: tuple[float, float]
    edges: np.ndarray
    bins: np.ndarray  # integrated DOS per bin, per unknown
    counting: np.ndarray  # counting function at the edges, per unknown
    probes: int
    moments: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "interval": list(self.interval),
            "edges": self.edges.tolist(),
            "bins": self.bins.tolist(),
            "counting": self.counting.tolist(),
            "probes": self.probes,
            "moments": self.moments,
            "seed": self.seed,
        }


def _symmetric_operator(ops: AssembledOperators, operator: str):
    if operator == "H1":
        return ops.A_sym
    if operator == "H0":
        return ops.H0
    raise ValueError(f"operator must be 'H0' or 'H1', got {operator!r}")


def spectral_bounds(ops: AssembledOperators, operator: str = "H1") -> tuple[float, float]:
    return gershgorin_bounds(_symmetric_operator(ops, operator))


def pencil_residuals(ops: AssembledOperators, values, vectors, operator="H1") -> np.ndarray:
    """``||S v - lam M v|| / ||M v||`` for eigenvectors ``v`` of the pencil."""
    if operator == "H0":
        R = ops.H0 @ vectors - vectors * values
        return np.linalg.norm(R, axis=0) / np.linalg.norm(vectors, axis=0)
    Mv = ops.M @ vectors
    R = ops.S @ vectors - Mv * values
    return np.linalg.norm(R, axis=0) / np.linalg.norm(Mv, axis=0)


def extremal_eigs(
    ops: AssembledOperators,
    which: str = "smallest",
    count: int = 6,
    tol: float = DEFAULT_EIG_TOL,
    *,
    seed: int = 0,
    operator: str = "H1",
    return_vectors: bool = False,
):
    """Extremal Ritz pairs of ``(S, M)`` by implicitly restarted Lanczos.

    The pencil is reduced blockwise to ``M^{-1/2} S M^{-1/2}``.  On hitting
    the restart cap the converged pairs are returned with ``converged=False``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    side = {"smallest": "SA", "largest": "LA"}.get(which)
    if side is None:
        raise ValueError(f"which must be 'smallest' or 'largest', got {which!r}")
    A = _symmetric_operator(ops, operator)
    D = A.shape[0]
    matvecs = [0]

    def mv(x):
        matvecs[0] += 1
        return A @ x

    lin = spla.LinearOperator(A.shape, matvec=mv, dtype=float)
    k = min(count, D - 1)
    v0 = np.random.default_rng(seed).standard_normal(D)
    # ARPACK's tol is relative to |lambda|; the contract is on the residual itself
    lam_scale = max(abs(x) for x in gershgorin_bounds(A))
    arpack_tol = tol / max(lam_scale, 1.0)
    converged = True
    try:
        vals, vecs = spla.eigsh(lin, k=k, which=side, tol=arpack_tol, v0=v0, maxiter=MAX_RESTARTS, ncv=min(D, max(2 * k + 1, 40)))
    except spla.ArpackNoConvergence as exc:
        log.warning("eigensolver hit the restart cap with %d of %d pairs", len(exc.eigenvalues), k)
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        converged = False
    order = np.argsort(vals)
    if which == "largest":
        order = order[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if operator == "H1":
        vecs = ops.M_inv_half @ vecs
    res = pencil_residuals(ops, vals, vecs, operator)
    report = SpectralReport(
        which=which,
        count=count,
        values=[float(v) for v in vals],
        residuals=[float(r) for r in res],
        matvecs=matvecs[0],
        converged=converged and bool(np.all(res <= tol)),
        tol=tol,
        provenance=dict(ops.provenance, operator=operator),
    )
    if return_vectors:
        return report, vecs
    return report


# -- density of states ------------------------------------------------------------------


def kpm_moments(A, n_moments: int, probes: int, seed: int, lo: float, hi: float) -> np.ndarray:
    """Stochastic Chebyshev moments ``tr T_m(A_scaled) / D`` with Rademacher probes."""
    D = A.shape[0]
    rng = np.random.default_rng(seed)
    # probe j is the j-th draw of the stream, so a larger block extends a smaller one
    R = rng.choice(np.array([-1.0, 1.0]), size=(probes, D)).T
    c, r = 0.5 * (hi + lo), 0.5 * (hi - lo)
    mu = np.empty(n_moments)
    t_prev = R
    mu[0] = np.sum(R * t_prev) / (probes * D)
    t_cur = (A @ t_prev - c * t_prev) / r
    if n_moments > 1:
        mu[1] = np.sum(R * t_cur) / (probes * D)
    for m in range(2, n_moments):
        t_next = 2.0 * (A @ t_cur - c * t_cur) / r - t_prev
        mu[m] = np.sum(R * t_next) / (probes * D)
        t_prev, t_cur = t_cur, t_next
    return mu


def counting_function(mu: np.ndarray, energies, lo: float, hi: float, kernel: bool = True) -> np.ndarray:
    """Integrated DOS ``N(E)`` from Chebyshev moments (Jackson damped)."""
    M = mu.size
    g = jackson_kernel(M) if kernel else np.ones(M)
    c, r = 0.5 * (hi + lo), 0.5 * (hi - lo)
    x = np.clip((np.asarray(energies, dtype=float) - c) / r, -1.0, 1.0)
    theta = np.arccos(x)
    m = np.arange(1, M)
    out = mu[0] * (1.0 - theta / np.pi)
    out = out - (2.0 / np.pi) * np.sin(np.outer(theta, m)) @ (g[1:] * mu[1:] / m)
    return out


def kpm_density(mu: np.ndarray, energies, lo: float, hi: float) -> np.ndarray:
    """Jackson-damped density of states per unit energy at points strictly inside ``(lo, hi)``."""
    c, r = 0.5 * (hi + lo), 0.5 * (hi - lo)
    x = (np.asarray(energies, dtype=float) - c) / r
    if np.any(np.abs(x) >= 1):
        raise ValueError("density points must lie strictly inside the scaled spectral bounds")
    w = jackson_kernel(mu.size) * mu
    w[1:] *= 2.0
    T = np.cos(np.outer(np.arccos(x), np.arange(mu.size)))
    return (T @ w) / (np.pi * np.sqrt(1.0 - x * x) * r)


def exact_moments(eigenvalues, n_moments: int, lo: float, hi: float) -> np.ndarray:
    """Chebyshev moments of a known spectrum (dense oracle helper)."""
    c, r = 0.5 * (hi + lo), 0.5 * (hi - lo)
    x = np.clip((np.asarray(eigenvalues) - c) / r, -1.0, 1.0)
    T = np.cos(np.outer(np.arange(n_moments), np.arccos(x)))
    return T.mean(axis=1)


def density_of_states(
    ops: AssembledOperators,
    interval=None,
    bins: int = 20,
    probes: int = 32,
    seed: int = 0,
    *,
    moments: int = 200,
    operator: str = "H1",
) -> DOSHistogram:
    """Kernel-polynomial estimate of the integrated DOS per bin over ``interval``."""
    if probes < 8:
        raise ValueError("density_of_states needs at least 8 probe vectors")
    A = _symmetric_operator(ops, operator)
    lo, hi = gershgorin_bounds(A)
    if interval is None:
        interval = (max(lo, 0.0), hi)
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError(f"degenerate DOS interval [{a}, {b}]")
    if a < min(lo, 0.0) or b > hi:
        raise ValueError(f"interval [{a}, {b}] lies outside the spectral bounds [{lo:.6g}, {hi:.6g}]")
    mu = kpm_moments(A, moments, probes, seed, lo, hi)
    edges = np.linspace(a, b, bins + 1)
    N = counting_function(mu, edges, lo, hi)
    return DOSHistogram(
        interval=(a, b), edges=edges, bins=np.diff(N), counting=N, probes=probes, moments=moments, seed=seed
    )


def dos_l1_distance(est: DOSHistogram | np.ndarray, ref: DOSHistogram | np.ndarray) -> float:
    """Relative L1 distance of two counting functions sampled on the same edges."""
    a = est.counting if isinstance(est, DOSHistogram) else np.asarray(est)
    b = ref.counting if isinstance(ref, DOSHistogram) else np.asarray(ref)
    num = np.trapezoid(np.abs(a - b))
    den = np.trapezoid(np.abs(b))
    return float(num / den) if den > 0 else float(num)


# -- spectral filters -------------------------------------------------------------------


@dataclass
class SpectralFilter:
    """Polynomial approximation of the spectral projector onto ``interval``."""

    A: object
    interval: tuple[float, float]
    bounds: tuple[float, float]
    margin: float
    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, V):
        return cheb_apply(self.A, V, self.coeffs, *self.bounds)


def make_filter(A, interval, *, margin: float | None = None, tol: float = 1e-10, bounds=None) -> SpectralFilter:
    """Smoothed indicator of ``interval`` expanded in Chebyshev polynomials.

    ``margin`` is the transition half-width around each endpoint (default 2% of
    the spectral width); the error-function edges put the indicator within
    ~1e-12 of 0 or 1 once an eigenvalue is ``margin`` away from an endpoint.
    """
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError(f"degenerate filter interval [{a}, {b}]")
    lo, hi = gershgorin_bounds(A) if bounds is None else bounds
    if margin is None:
        margin = FILTER_MARGIN * (hi - lo)
    if b < lo - margin or a > hi + margin:
        raise ValueError(f"filter interval [{a}, {b}] lies outside the spectral range [{lo:.6g}, {hi:.6g}]")
    coeffs = chebyshev_coefficients(smooth_indicator(a, b, margin / 5.0), lo, hi, tol=tol, floor=1.0)
    return SpectralFilter(A=A, interval=(a, b), bounds=(lo, hi), margin=margin, coeffs=coeffs)


def spectral_filter_apply(ops: AssembledOperators, interval, v, *, operator="H1", margin=None, tol=1e-10):
    """Approximate ``E_I v`` for the chosen operator.

    For ``H1`` the projector is self-adjoint in the ``M`` inner product:
    ``E_I(H1) = M^{-1/2} E_I(A) M^{1/2}``.
    """
    A = _symmetric_operator(ops, operator)
    filt = make_filter(A, interval, margin=margin, tol=tol)
    v = np.asarray(v)
    if operator == "H1":
        return ops.M_inv_half @ filt(ops.M_half @ v)
    return filt(v)


def filter_idempotence_defect(ops: AssembledOperators, interval, v, **kw) -> float:
    once = spectral_filter_apply(ops, interval, v, **kw)
    twice = spectral_filter_apply(ops, interval, once, **kw)
    return float(np.linalg.norm(twice - once) / np.linalg.norm(v))


# -- discrete spectrum ------------------------------------------------------------------


@dataclass
class DiscreteSpectrumVerdict:
    passed: bool
    lowest: float
    flat_reference_gap: float
    relative_deviation: float
    negative_values: list[float]
    report: SpectralReport
    note: str = (
        "finite box: verdict is relative to the flat Dirichlet gap of the same grid; "
        "absence of discrete spectrum on R^n is not decidable numerically"
    )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "lowest": self.lowest,
            "flat_reference_gap": self.flat_reference_gap,
            "relative_deviation": self.relative_deviation,
            "negative_values": list(self.negative_values),
            "report": self.report.to_dict(),
            "note": self.note,
        }


def flat_reference_gap(grid, count: int = 1, tol: float = DEFAULT_EIG_TOL, seed: int = 0) -> float:
    from .assembly import assemble
    from .metric_models import MetricSpec

    flat = assemble(MetricSpec("flat", dim=grid.n), grid)
    return extremal_eigs(flat, "smallest", count, tol, seed=seed).values[0]


def detect_discrete_spectrum(
    ops: AssembledOperators,
    flat_gap: float,
    tol: float = DEFAULT_EIG_TOL,
    *,
    count: int = 6,
    seed: int = 0,
    rtol: float = DISCRETE_SPECTRUM_RTOL,
) -> DiscreteSpectrumVerdict:
    """PASS when no Ritz value is below ``-tol`` and the lowest is within ``rtol`` of the flat gap."""
    report = extremal_eigs(ops, "smallest", count, tol, seed=seed)
    vals = np.asarray(report.values)
    negative = [float(v) for v in vals if v < -tol]
    lowest = float(vals.min())
    dev = abs(lowest - flat_gap) / abs(flat_gap)
    return DiscreteSpectrumVerdict(
        passed=not negative and dev <= rtol,
        lowest=lowest,
        flat_reference_gap=float(flat_gap),
        relative_deviation=float(dev),
        negative_values=negative,
        report=report,
    )
