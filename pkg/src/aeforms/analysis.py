"""Numerical audits of the analytic estimates behind the spectral and scattering results.

* quadratic forms ``h0``/``h1`` by direct quadrature and their two-sided equivalence
* the pointwise curvature bound
* weighted ``L^2_delta`` norms of radial profiles
* decay of the coefficient groups of ``H1 - H0``
* singular values of the filtered commutator and of ``(J*J - I) E_I(H0)``
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .assembly import AssembledOperators, assemble, jstar_j_minus_identity
from .geometry import christoffel, curvature, perturbation_coefficients
from .grid import Grid
from .metric_models import (
    DEFAULT_RADII,
    DecayReport,
    MetricSpec,
    _check_radii,
    check_k_decay,
    eval_metric,
    make_decay_report,
    sphere_directions,
)
from .spectral import make_filter

log = logging.getLogger(__name__)

FORMS_A_MAX = 10.0
FORMS_CONSISTENCY_RTOL = 1e-10
L2_DELTA_RTOL = 0.01
COMMUTATOR_STABILITY_MAX = 0.10
COMMUTATOR_DECAY_RATIO = 0.1


# -- quadratic forms --------------------------------------------------------------------


@dataclass
class FormsReport:
    form_id: str
    h0: float
    h1: float
    h1_gradient: float
    h1_curvature: float
    norm_sq: float  # Euclidean ||w||^2 including the cell volume
    stiffness_value: float | None = None  # w^T S w, when operators were supplied
    consistency: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _full_field(grid: Grid, omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape == (grid.n_dof,):
        return grid.from_interior(omega).reshape(-1, grid.n)
    if omega.shape != grid.shape + (grid.n,):
        raise ValueError(f"omega must be an interior vector or a field of shape {grid.shape + (grid.n,)}")
    flat = omega.reshape(-1, grid.n)
    if np.any(flat[~grid.interior_mask] != 0):
        raise ValueError("omega must vanish on the Dirichlet boundary layer")
    return flat


def evaluate_quadratic_forms(spec: MetricSpec, grid: Grid, omega, *, form_id: str = "", ops=None) -> FormsReport:
    """Quadrature of the flat and curved quadratic forms of a compactly supported 1-form.

    The gradient part is ``sum_i sum_edges h^n sqrt(g) g^{ii} g^{ab} D_a D_b``
    with ``D`` the midpoint covariant difference along the edge; the
    curvature part is the nodal sum ``h^n sqrt(g) R^{ab} w_a w_b``.
    """
    spec = spec.with_dim(grid.n)
    n, h, vol = grid.n, grid.h, grid.cell_volume
    w = _full_field(grid, omega)
    coords = grid.coords
    mi = grid.multi_index
    h0 = 0.0
    grad = 0.0
    for i in range(n):
        a = np.nonzero(mi[:, i] < grid.points - 1)[0]
        b = a + grid.strides[i]
        mid = coords[a].copy()
        mid[:, i] += 0.5 * h
        diff = (w[b] - w[a]) / h
        h0 += vol * np.sum(diff * diff)
        md = eval_metric(spec, mid)
        gam_i = christoffel(spec, mid)[:, :, i, :]  # [e, be, al] = Gam^be_{i al}
        avg = 0.5 * (w[b] + w[a])
        D = diff - np.einsum("eba,eb->ea", gam_i, avg)
        gii = md.g_upper[:, i, i]
        grad += vol * np.sum(md.sqrt_det * gii * np.einsum("ea,eab,eb->e", D, md.g_upper, D))
    x = grid.interior_coords
    wi = w[grid.interior_points]
    geo = curvature(spec, x)
    sq = eval_metric(spec, x).sqrt_det
    curv = vol * float(np.sum(sq * np.einsum("pa,pab,pb->p", wi, geo.ricci_upper, wi)))
    norm_sq = vol * float(np.sum(wi * wi))
    rep = FormsReport(
        form_id=form_id,
        h0=float(h0),
        h1=float(grad + curv),
        h1_gradient=float(grad),
        h1_curvature=curv,
        norm_sq=norm_sq,
    )
    if ops is not None:
        v = wi.reshape(-1)
        sv = float(v @ (ops.S @ v))
        rep.stiffness_value = sv
        rep.consistency = abs(rep.h1 - sv) / max(abs(sv), abs(rep.h1), 1e-300)
    return rep


@dataclass(frozen=True)
class BumpForm:
    form_id: str
    center: np.ndarray
    width: float
    frequency: np.ndarray
    polarization: int

    def __call__(self, x):
        d = x - self.center
        env = np.exp(-np.sum(d * d, axis=1) / (2.0 * self.width**2)) * np.cos(d @ self.frequency)
        out = np.zeros_like(x)
        out[:, self.polarization] = env
        return out


def bump_form_family(grid: Grid, seed: int = 0, n_centers: int = 5) -> list[BumpForm]:
    """Seeded smooth bumps: plain Gaussians at two widths and plane-wave modulated ones.

    Centers lie in the inner half of the box and widths scale with the box so
    every form is negligible on the boundary layer.
    """
    n, L = grid.n, grid.half_width
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-0.5 * L, 0.5 * L, size=(n_centers, n))
    widths = (L / 12.0, L / 6.0)
    # 16 and 8 grid points per modulation wavelength
    freqs = (np.pi / (8.0 * grid.h), np.pi / (4.0 * grid.h))
    forms = []
    for c_id, c in enumerate(centers):
        for w_id, width in enumerate(widths):
            for pol in range(n):
                forms.append(BumpForm(f"bump-c{c_id}-w{w_id}-e{pol}", c, width, np.zeros(n), pol))
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction)
        for f_id, k in enumerate(freqs):
            for pol in range(n):
                forms.append(BumpForm(f"wave-c{c_id}-k{f_id}-e{pol}", c, widths[0], k * direction, pol))
    return forms


@dataclass
class FormEquivalenceReport:
    forward: tuple[float, float]  # (a, b) with h1 <= a h0 + b ||w||^2
    reverse: tuple[float, float]  # (a', b') with h0 <= a' h1 + b' ||w||^2
    n_forms: int
    passed: bool
    forms: list[FormsReport] = field(default_factory=list)
    condition: str = "condition-4"

    def to_dict(self) -> dict:
        return {
            "forward": list(self.forward),
            "reverse": list(self.reverse),
            "n_forms": self.n_forms,
            "passed": self.passed,
            "condition": self.condition,
            "forms": [f.to_dict() for f in self.forms],
        }


def _fit_constants(upper, lower, norm_sq, a0):
    """Constants of ``upper <= a lower + b ||w||^2`` starting from the symbol ratio ``a0``.

    ``b`` is the smallest offset that makes ``a0`` admissible; ``a`` is then
    tightened to the smallest slope admissible with that ``b``.
    """
    b = max(0.0, float(np.max((upper - a0 * lower) / norm_sq)))
    a = float(np.max((upper - b * norm_sq) / lower))
    return max(a, 0.0), b


def form_domain_equivalence(spec: MetricSpec, grid: Grid, forms=None, *, seed: int = 0, ops=None) -> FormEquivalenceReport:
    """Empirical two-sided bounds between ``h0`` and ``h1`` over a test family."""
    spec = spec.with_dim(grid.n)
    if forms is None:
        forms = bump_form_family(grid, seed)
    reports = []
    for f in forms:
        vec = grid.sample(f) if callable(f) else np.asarray(f, dtype=float)
        fid = getattr(f, "form_id", f"form-{len(reports)}")
        rep = evaluate_quadratic_forms(spec, grid, vec, form_id=fid, ops=ops)
        if rep.norm_sq == 0 or rep.h0 == 0:
            continue  # the zero form carries no information
        reports.append(rep)
    if not reports:
        raise ValueError("form family contains no non-zero forms")
    h0 = np.array([r.h0 for r in reports])
    h1 = np.array([r.h1 for r in reports])
    nsq = np.array([r.norm_sq for r in reports])
    # principal-symbol ratios sqrt(g) |g^{-1}|^2 over the grid
    md = eval_metric(spec, grid.interior_coords)
    lam = np.linalg.eigvalsh(md.g_upper)
    sym_hi = float(np.max(md.sqrt_det * lam[:, -1] ** 2))
    sym_lo = float(np.min(md.sqrt_det * lam[:, 0] ** 2))
    fwd = _fit_constants(h1, h0, nsq, sym_hi)
    if np.any(h1 <= 0):
        rev = (np.inf, np.inf)
    else:
        rev = _fit_constants(h0, h1, nsq, 1.0 / sym_lo)
    passed = all(np.isfinite(c) for c in fwd + rev) and fwd[0] <= FORMS_A_MAX and rev[0] <= FORMS_A_MAX
    return FormEquivalenceReport(forward=fwd, reverse=rev, n_forms=len(reports), passed=bool(passed), forms=reports)


# -- curvature bound --------------------------------------------------------------------


@dataclass
class CurvatureBound:
    euclidean: float  # max ||sqrt(g) R^{ab}||_2: |curvature part| <= C ||w||_e^2
    pencil_floor: float  # max lambda(-sqrt(g) R, sqrt(g) g^{-1}): lowest pencil eigenvalue >= -C
    condition: str = "eq-curvature"

    def to_dict(self) -> dict:
        return {"euclidean": self.euclidean, "pencil_floor": self.pencil_floor, "condition": self.condition}


def curvature_bound(spec: MetricSpec, grid: Grid) -> CurvatureBound:
    spec = spec.with_dim(grid.n)
    x = grid.interior_coords
    md = eval_metric(spec, x)
    R = curvature(spec, x).ricci_upper
    R = 0.5 * (R + np.swapaxes(R, 1, 2))
    W = md.sqrt_det[:, None, None] * R
    euc = float(np.max(np.abs(np.linalg.eigvalsh(W)))) if W.size else 0.0
    B = md.sqrt_det[:, None, None] * md.g_upper
    # generalized eigenvalues of (-W, B) via the Cholesky factor of B
    Linv = np.linalg.inv(np.linalg.cholesky(B))
    pencil = np.einsum("pij,pjk,plk->pil", Linv, -W, Linv)
    floor = float(np.max(np.linalg.eigvalsh(pencil)))
    return CurvatureBound(euclidean=euc, pencil_floor=max(floor, 0.0))


# -- weighted L2 norms ------------------------------------------------------------------


@dataclass
class L2DeltaResult:
    value: float
    convergent: bool
    radii: list[float]
    cumulative: list[float]
    last_increment: float
    delta: float
    n: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "convergent": self.convergent,
            "radii": list(self.radii),
            "cumulative": list(self.cumulative),
            "last_increment": self.last_increment,
            "delta": self.delta,
            "n": self.n,
        }


DEFAULT_L2_RADII = (0.0,) + tuple(float(2**k) for k in range(17))


def sphere_area(n: int) -> float:
    return float(2.0 * np.pi ** (n / 2.0) / gamma_fn(n / 2.0))


def l2_delta_norm(profile, delta: float, n: int, radii=DEFAULT_L2_RADII, *, nodes: int = 48) -> L2DeltaResult:
    """``int |f(|x|)|^2 (1 + |x|^2)^delta dx`` over balls of growing radius.

    Each shell between consecutive radii is integrated by Gauss-Legendre in
    the radial variable with the sphere-area factor.  The integral is
    declared convergent when the last shell adds less than 1% of the total.
    Returns the squared norm (the integral itself).
    """
    if not delta > n / 2.0:
        raise ValueError(
            f"delta={delta} violates the weight hypothesis delta > n/2 (n={n}); "
            "L^2_delta membership is only asserted for delta > n/2"
        )
    radii = [float(r) for r in radii]
    if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] < 0:
        raise ValueError("radii must be >= 3 strictly increasing non-negative values")
    t, wq = np.polynomial.legendre.leggauss(nodes)
    area = sphere_area(n)
    cumulative = [0.0]
    total = 0.0
    for r0, r1 in zip(radii, radii[1:]):
        r = 0.5 * (r1 - r0) * t + 0.5 * (r1 + r0)
        f = np.asarray(profile(r), dtype=float)
        integrand = f * f * (1.0 + r * r) ** delta * area * r ** (n - 1)
        total += 0.5 * (r1 - r0) * float(wq @ integrand)
        cumulative.append(total)
    last = cumulative[-1] - cumulative[-2]
    convergent = bool(total == 0.0 or (np.isfinite(total) and last < L2_DELTA_RTOL * total))
    return L2DeltaResult(
        value=float(total),
        convergent=convergent,
        radii=radii,
        cumulative=cumulative,
        last_increment=float(last),
        delta=float(delta),
        n=int(n),
    )


# -- coefficient decay ------------------------------------------------------------------


AUDIT_GROUPS = (
    "second_order",
    "first_a",
    "first_b",
    "first_c",
    "zeroth_a",
    "zeroth_b",
    "zeroth_c",
    "ricci",
    "sqrt_g_inverse_metric",
)


def _group_values(spec: MetricSpec, pts: np.ndarray) -> dict[str, np.ndarray]:
    """Max-abs entry of each coefficient group at every point; ``pts`` is ``(..., n)``."""
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, spec.dim)
    coeffs = perturbation_coefficients(spec, flat).groups()
    md = eval_metric(spec, flat)
    coeffs["sqrt_g_inverse_metric"] = md.sqrt_det[:, None, None] * md.g_upper - np.eye(spec.dim)
    return {k: np.abs(v).reshape(flat.shape[0], -1).max(axis=1).reshape(shape) for k, v in coeffs.items()}


def coefficient_decay_audit(
    spec: MetricSpec,
    k_decay: float,
    radii=DEFAULT_RADII,
    *,
    n_random: int = 64,
    seed: int = 0,
    l2_radii=DEFAULT_L2_RADII,
) -> list[DecayReport]:
    """Decay of every coefficient group of ``H1 - H0`` and of ``sqrt(g) g^{jk} - delta^{jk}``.

    Each report's ``l2_delta`` holds the weighted norm of the group's angular
    maximum as a radial profile, with ``delta = n/2 + (k_decay - n)/2``.
    """
    check_k_decay(k_decay, spec.dim)
    radii = _check_radii(radii)
    dirs = sphere_directions(spec.dim, n_random, seed)
    r = np.asarray(radii)
    profile_vals = _group_values(spec, r[:, None, None] * dirs[None])
    delta = spec.dim / 2.0 + (k_decay - spec.dim) / 2.0
    cache: dict[str, dict] = {}

    def radial(name):
        def f(rr):
            key = tuple(np.round(rr, 15))
            if key not in cache:
                cache[key] = _group_values(spec, np.asarray(rr)[:, None, None] * dirs[None])
            return cache[key][name].max(axis=1)

        return f

    reports = []
    for name in AUDIT_GROUPS:
        rep = make_decay_report(name, "lemma-f", radii, profile_vals[name].max(axis=1), k_decay)
        rep.l2_delta = l2_delta_norm(radial(name), delta, spec.dim, l2_radii)
        reports.append(rep)
    return reports


# -- filtered commutator ----------------------------------------------------------------


def randomized_svd(apply, apply_adjoint, dim: int, rank: int, *, oversample: int = 10, power_iters: int = 4, seed: int = 0):
    """Top singular values of an implicit real operator by subspace iteration.

    ``apply`` and ``apply_adjoint`` act on blocks of column vectors.
    """
    k = min(rank + oversample, dim)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(apply(rng.standard_normal((dim, k))))
    for _ in range(power_iters):
        Z, _ = np.linalg.qr(apply_adjoint(Q))
        Q, _ = np.linalg.qr(apply(Z))
    B = apply_adjoint(Q).T
    s = np.linalg.svd(B, compute_uv=False)
    return s[:rank]


@dataclass
class CommutatorReport:
    interval: tuple[float, float]
    rank: int
    singular_values: list[float]
    partial_sum: float
    jstar_singular_values: list[float]
    grid_points: list[int]
    stability_ratio: float | None
    filter_margin: float
    filter_degrees: tuple[int, int]
    passed: bool | None = None
    partial_sums: list[float] = field(default_factory=list)
    condition: str = "condition-2"

    def to_dict(self) -> dict:
        return {
            "interval": list(self.interval),
            "rank": self.rank,
            "singular_values": list(self.singular_values),
            "partial_sum": self.partial_sum,
            "partial_sums": list(self.partial_sums),
            "jstar_singular_values": list(self.jstar_singular_values),
            "grid_points": list(self.grid_points),
            "stability_ratio": self.stability_ratio,
            "filter_margin": self.filter_margin,
            "filter_degrees": list(self.filter_degrees),
            "passed": self.passed,
            "condition": self.condition,
        }


DEFAULT_COMMUTATOR_MARGIN = 0.1


def filtered_commutator(ops: AssembledOperators, interval, *, margin: float = DEFAULT_COMMUTATOR_MARGIN, tol: float = 1e-10):
    """Forward and adjoint block actions of the filtered commutator in orthonormal coordinates.

    With ``B = E_I(H1) (H1 J - J H0) E_I(H0)`` mapping the Euclidean space to
    the curved one, the returned pair applies
    ``T = M^{1/2} B h^{-n/2} = E_I(A) (M^{-1/2} S - M^{1/2} H0) E_I(H0) h^{-n/2}``
    and its transpose, so the singular values of ``T`` are those of ``B``.
    """
    f1 = make_filter(ops.A_sym, interval, margin=margin, tol=tol)
    f0 = make_filter(ops.H0, interval, margin=margin, tol=tol)
    scale = ops.grid.cell_volume ** -0.5
    L = ops.M_inv_half @ ops.S
    R = ops.M_half @ ops.H0
    C = (L - R).tocsr()
    Ct = C.T.tocsr()

    def apply(X):
        return scale * f1(C @ f0(X))

    def adjoint(Y):
        return scale * f0(Ct @ f1(Y))

    return apply, adjoint, (f1.degree, f0.degree)


def jstar_filtered(ops: AssembledOperators, interval, *, margin: float = DEFAULT_COMMUTATOR_MARGIN, tol: float = 1e-10):
    """``(J*J - I) E_I(H0)`` and its transpose in Euclidean coordinates."""
    f0 = make_filter(ops.H0, interval, margin=margin, tol=tol)
    from .assembly import _block_diag

    K = _block_diag(jstar_j_minus_identity(ops))
    Kt = K.T.tocsr()
    return (lambda X: K @ f0(X)), (lambda Y: f0(Kt @ Y))


def commutator_singular_values(
    ops: AssembledOperators,
    interval,
    rank: int = 20,
    *,
    margin: float = DEFAULT_COMMUTATOR_MARGIN,
    tol: float = 1e-10,
    seed: int = 0,
    power_iters: int = 4,
    oversample: int = 10,
) -> CommutatorReport:
    if not 1 <= rank <= 64:
        raise ValueError("rank must be between 1 and 64")
    a, b = float(interval[0]), float(interval[1])
    apply, adjoint, degrees = filtered_commutator(ops, (a, b), margin=margin, tol=tol)
    D = ops.grid.n_dof
    s = randomized_svd(apply, adjoint, D, rank, oversample=oversample, power_iters=power_iters, seed=seed)
    japply, jadjoint = jstar_filtered(ops, (a, b), margin=margin, tol=tol)
    sj = randomized_svd(japply, jadjoint, D, rank, oversample=oversample, power_iters=power_iters, seed=seed)
    return CommutatorReport(
        interval=(a, b),
        rank=rank,
        singular_values=[float(x) for x in s],
        partial_sum=float(np.sum(s)),
        jstar_singular_values=[float(x) for x in sj],
        grid_points=[ops.grid.points],
        stability_ratio=None,
        filter_margin=margin,
        filter_degrees=degrees,
    )


def commutator_stability(
    spec: MetricSpec,
    half_width: float,
    points=(512, 768),
    interval=(0.2, 1.0),
    rank: int = 20,
    **kw,
) -> CommutatorReport:
    """Partial-sum stability of the commutator singular values under grid refinement at a fixed box.

    PASS when the relative change of the top-``rank`` partial sum stays within
    10% and the singular values decay (``s_rank <= 0.1 s_1``), or when every
    value on the finest grid is at filter-tolerance level.
    """
    if len(points) != 2:
        raise ValueError("points must name exactly two grid sizes")
    reports = []
    for N in points:
        grid = Grid(n=spec.dim, half_width=half_width, points=N)
        reports.append(commutator_singular_values(assemble(spec, grid), interval, rank, **kw))
    coarse, fine = reports
    tol = kw.get("tol", 1e-10)
    if coarse.partial_sum == 0:
        ratio = 0.0 if fine.partial_sum == 0 else np.inf
    else:
        ratio = abs(fine.partial_sum - coarse.partial_sum) / coarse.partial_sum
    s = fine.singular_values
    vanishing = max(s) <= tol
    decaying = s[-1] <= COMMUTATOR_DECAY_RATIO * s[0]
    fine.grid_points = list(points)
    fine.stability_ratio = float(ratio)
    fine.partial_sums = [coarse.partial_sum, fine.partial_sum]
    fine.passed = bool(vanishing or (ratio <= COMMUTATOR_STABILITY_MAX and decaying))
    return fine
