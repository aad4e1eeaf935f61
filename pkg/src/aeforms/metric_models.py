"""Analytic asymptotically Euclidean metric families on R^n.

Every shipped family is diagonal, ``g_ij(x) = F_i(|x|^2) delta_ij``, with a
radial profile ``F_i`` whose first two derivatives in ``s = |x|^2`` are known in
closed form.  All evaluators accept a single point of shape ``(n,)`` or a batch
of shape ``(..., n)``.

Derivative layout
-----------------
``metric_derivatives(spec, x, 1)[..., i, l, j]`` is ``d g_il / d x_j`` and
``metric_derivatives(spec, x, 2)[..., i, l, j, k]`` is
``d^2 g_il / d x_j d x_k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

FAMILIES = ("flat", "conformal-gaussian", "conformal-rational", "diagonal-rational")

# tolerance added to the claimed exponent when judging a fitted slope
SLOPE_TOLERANCE = 0.2
DEFAULT_RADII = (8.0, 16.0, 32.0, 64.0, 128.0)


@dataclass(frozen=True)
class MetricSpec:
    """A metric family plus its parameters.

    ``amplitude`` is ``a``; ``decay`` is the exponent ``p`` of the rational
    envelope ``(1 + |x|^2)^(-p/2)``.  ``amplitudes`` gives per-axis amplitudes
    for the diagonal-rational family; when omitted they default to
    ``a * (1 + i) / n`` for axis ``i``.
    """

    family: str = "flat"
    amplitude: float = 0.1
    decay: float = 4.0
    dim: int = 2
    amplitudes: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown metric family {self.family!r}; expected one of {FAMILIES}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dimension must be an integer >= 1, got {self.dim}")
        if not np.isfinite(self.amplitude) or not np.isfinite(self.decay):
            raise ValueError("amplitude and decay must be finite")
        if self.family in ("conformal-rational", "diagonal-rational"):
            if self.decay <= 0:
                raise ValueError("rational families need a positive decay exponent p")
            if min(self.axis_amplitudes()) <= -1.0:
                raise ValueError("rational amplitudes must exceed -1 to keep the metric positive definite")
        if self.amplitudes is not None and len(self.amplitudes) != self.dim:
            raise ValueError(f"expected {self.dim} per-axis amplitudes, got {len(self.amplitudes)}")

    def axis_amplitudes(self) -> np.ndarray:
        if self.family == "diagonal-rational":
            if self.amplitudes is not None:
                return np.asarray(self.amplitudes, dtype=float)
            return self.amplitude * (1.0 + np.arange(self.dim)) / self.dim
        return np.full(self.dim, float(self.amplitude))

    def with_dim(self, dim: int) -> "MetricSpec":
        amps = self.amplitudes
        if amps is not None and len(amps) != dim:
            amps = None
        return replace(self, dim=dim, amplitudes=amps)

    @property
    def is_flat(self) -> bool:
        return self.family == "flat"

    def to_dict(self) -> dict:
        d = {"family": self.family, "amplitude": self.amplitude, "decay": self.decay, "dim": self.dim}
        if self.amplitudes is not None:
            d["amplitudes"] = list(self.amplitudes)
        return d


@dataclass
class MetricPointData:
    g_lower: np.ndarray
    g_upper: np.ndarray
    sqrt_det: np.ndarray


@dataclass
class DecayReport:
    quantity: str
    condition: str
    radii: list[float]
    max_values: list[float]
    slope: float
    k_decay: float
    passed: bool
    tolerance: float = SLOPE_TOLERANCE
    l2_delta: object = None

    def to_dict(self) -> dict:
        d = {
            "quantity": self.quantity,
            "condition": self.condition,
            "radii": list(self.radii),
            "max_values": list(self.max_values),
            "slope": self.slope,
            "k_decay": self.k_decay,
            "passed": self.passed,
            "tolerance": self.tolerance,
        }
        if self.l2_delta is not None:
            d["l2_delta"] = self.l2_delta.to_dict()
        return d


@dataclass
class MetricBand:
    """Empirical constants of the pointwise norm equivalences.

    ``sqrt_det`` lies in ``[C, C1]`` and the eigenvalues of ``g^{ij}`` lie in
    ``[D, D1]`` over the scanned points.
    """

    C: float
    C1: float
    D: float
    D1: float
    n_points: int

    @property
    def mass_band(self) -> tuple[float, float]:
        return self.C * self.D, self.C1 * self.D1

    @property
    def rank2_band(self) -> tuple[float, float]:
        # eigenvalues of sqrt(g) g^{ij} g^{kl} acting on rank-2 tensors
        return self.C * self.D**2, self.C1 * self.D1**2

    def to_dict(self) -> dict:
        return {"C": self.C, "C1": self.C1, "D": self.D, "D1": self.D1, "n_points": self.n_points}


def _as_points(spec: MetricSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (spec.dim,):
        raise ValueError(f"points must have trailing dimension {spec.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite coordinate in metric evaluation point")
    return x


def _profile(spec: MetricSpec, s: np.ndarray):
    """Return ``F, dF/ds, d2F/ds2`` with shape ``s.shape + (n,)``."""
    shape = s.shape + (spec.dim,)
    s = s[..., None]
    if spec.family == "flat":
        return np.ones(shape), np.zeros(shape), np.zeros(shape)
    a = spec.axis_amplitudes()
    if spec.family == "conformal-gaussian":
        e = np.exp(-s)
        F = np.exp(2.0 * a * e)
        dF = F * (-2.0 * a * e)
        d2F = F * (4.0 * a**2 * e**2 + 2.0 * a * e)
        return np.broadcast_to(F, shape), np.broadcast_to(dF, shape), np.broadcast_to(d2F, shape)
    # rational envelopes
    q = 0.5 * spec.decay
    base = 1.0 + s
    env = base ** (-q)
    F = 1.0 + a * env
    dF = -q * a * env / base
    d2F = q * (q + 1.0) * a * env / base**2
    return np.broadcast_to(F, shape), np.broadcast_to(dF, shape), np.broadcast_to(d2F, shape)


def eval_metric(spec: MetricSpec, x) -> MetricPointData:
    """Covariant metric, its inverse and the volume density at ``x``."""
    x = _as_points(spec, x)
    F, _, _ = _profile(spec, np.sum(x * x, axis=-1))
    n = spec.dim
    eye = np.eye(n)
    g_lower = F[..., :, None] * eye
    g_upper = np.linalg.inv(g_lower)
    g_upper = 0.5 * (g_upper + np.swapaxes(g_upper, -1, -2))
    det = np.linalg.det(g_lower)
    if np.any(det <= 0):
        raise ValueError("metric is not positive definite at an evaluation point")
    return MetricPointData(g_lower=g_lower, g_upper=g_upper, sqrt_det=np.sqrt(det))


def metric_derivatives(spec: MetricSpec, x, order: int) -> np.ndarray:
    """Exact partial derivatives of ``g_il`` (see module docstring for layout)."""
    if order not in (1, 2):
        raise ValueError(f"derivative order must be 1 or 2, got {order}")
    x = _as_points(spec, x)
    n = spec.dim
    _, dF, d2F = _profile(spec, np.sum(x * x, axis=-1))
    eye = np.eye(n)
    # d_j F_i(|x|^2) = 2 x_j F_i'
    if order == 1:
        grad = 2.0 * dF[..., :, None] * x[..., None, :]  # [..., i, j]
        return eye[:, :, None] * grad[..., :, None, :]
    xx = x[..., :, None] * x[..., None, :]
    hess = 4.0 * d2F[..., :, None, None] * xx[..., None, :, :] + 2.0 * dF[..., :, None, None] * eye
    return eye[:, :, None, None] * hess[..., :, None, :, :]


def inverse_metric_derivatives(spec: MetricSpec, x) -> np.ndarray:
    """``d g^{il} / d x_j`` with layout ``[..., i, l, j]``."""
    gu = eval_metric(spec, x).g_upper
    d1 = metric_derivatives(spec, x, 1)
    return -np.einsum("...im,...mnj,...nl->...ilj", gu, d1, gu)


def sphere_directions(dim: int, n_random: int = 64, seed: int = 0) -> np.ndarray:
    """The 2n signed axis directions followed by seeded random unit vectors."""
    eye = np.eye(dim)
    axes = np.concatenate([eye, -eye])
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((n_random, dim))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.concatenate([axes, rand])


def fit_decay_slope(radii, values) -> float:
    """Least-squares slope of ``log(value)`` against ``log(r)``.

    Trailing exact zeros (underflow of super-polynomial decay) and identically
    zero profiles give ``-inf``.
    """
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    pos = v > 0
    if not pos.any():
        return -np.inf
    if not pos[-1]:
        return -np.inf
    if pos.sum() < 2:
        return -np.inf
    slope, _ = np.polyfit(np.log(r[pos]), np.log(v[pos]), 1)
    return float(slope)


def radial_max_profile(func, spec: MetricSpec, radii, n_random: int = 64, seed: int = 0) -> np.ndarray:
    """Max of ``func(points)`` (reduced over everything but the point axis) on each sphere."""
    dirs = sphere_directions(spec.dim, n_random, seed)
    radii = np.asarray(radii, dtype=float)
    pts = radii[:, None, None] * dirs[None, :, :]
    vals = np.abs(np.asarray(func(pts)))
    vals = vals.reshape(len(radii), dirs.shape[0], -1)
    return vals.max(axis=(1, 2))


def _check_radii(radii) -> list[float]:
    radii = [float(r) for r in radii]
    if len(radii) < 3 or any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be >= 3 strictly increasing positive values")
    if radii[-1] / radii[0] < 4.0 - 1e-12:
        raise ValueError("radii must span at least three dyadic levels (r_max / r_min >= 4)")
    return radii


def check_k_decay(k_decay: float, dim: int) -> None:
    if not k_decay > dim:
        raise ValueError(
            f"k_decay={k_decay} violates the decay hypothesis k > n (n={dim}); "
            "the trace-class and wave-operator estimates need k > n"
        )


def make_decay_report(quantity, condition, radii, values, k_decay, tolerance=SLOPE_TOLERANCE) -> DecayReport:
    slope = fit_decay_slope(radii, values)
    return DecayReport(
        quantity=quantity,
        condition=condition,
        radii=list(map(float, radii)),
        max_values=[float(v) for v in values],
        slope=slope,
        k_decay=float(k_decay),
        passed=bool(slope <= -k_decay + tolerance),
        tolerance=tolerance,
    )


def check_decay_conditions(
    spec: MetricSpec,
    k_decay: float,
    radii=DEFAULT_RADII,
    *,
    n_random: int = 64,
    seed: int = 0,
    tolerance: float = SLOPE_TOLERANCE,
) -> list[DecayReport]:
    """Audit the three decay hypotheses plus the contravariant-derivative bound.

    Returns four reports: ``|g^{ij} - delta^{ij}|``, ``|d g_il|``,
    ``|d^2 g_il|`` (each must decay like ``|x|^-k``) and ``|d g^{il}|``, which
    only needs to stay bounded (claimed exponent 0).
    """
    check_k_decay(k_decay, spec.dim)
    radii = _check_radii(radii)
    eye = np.eye(spec.dim)

    def dev(p):
        return eval_metric(spec, p).g_upper - eye

    quantities = [
        ("|g^ij - delta^ij|", "decay-1", dev, k_decay),
        ("|d g_il / d x_j|", "decay-2", lambda p: metric_derivatives(spec, p, 1), k_decay),
        ("|d2 g_il / d x_j d x_k|", "decay-3", lambda p: metric_derivatives(spec, p, 2), k_decay),
        ("|d g^il / d x_j|", "bounded-contravariant-derivative", lambda p: inverse_metric_derivatives(spec, p), 0.0),
    ]
    reports = []
    for name, cond, fn, k in quantities:
        vals = radial_max_profile(fn, spec, radii, n_random, seed)
        reports.append(make_decay_report(name, cond, radii, vals, k, tolerance))
    return reports


def metric_band(spec: MetricSpec, n_samples: int = 10_000, radius: float = 8.0, seed: int = 0, extra_points=None) -> MetricBand:
    """Scan ``sqrt(g)`` and the spectrum of ``g^{ij}`` over seeded sample points.

    The origin and a far-field point are always included since the radial
    families attain their extremes there.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-radius, radius, size=(n_samples, spec.dim))
    fixed = [np.zeros(spec.dim), np.full(spec.dim, 1e3)]
    pts = np.concatenate([pts, np.array(fixed)])
    if extra_points is not None:
        pts = np.concatenate([pts, np.asarray(extra_points, dtype=float).reshape(-1, spec.dim)])
    md = eval_metric(spec, pts)
    lam = np.linalg.eigvalsh(md.g_upper)
    return MetricBand(
        C=float(md.sqrt_det.min()),
        C1=float(md.sqrt_det.max()),
        D=float(lam.min()),
        D1=float(lam.max()),
        n_points=int(pts.shape[0]),
    )
