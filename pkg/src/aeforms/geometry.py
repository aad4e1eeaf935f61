"""Levi-Civita connection, curvature and the coefficient functions of H1 - H0.

Index layout: ``christoffel[..., a, i, j]`` is Gamma^a_ij (upper index first),
``christoffel_derivative[..., a, i, j, k]`` is d_k Gamma^a_ij and
``riemann[..., r, s, m, v]`` is R^r_{s m v} with the convention
``R^r_{smv} = d_m Gamma^r_{vs} - d_v Gamma^r_{ms} + Gamma^r_{ml} Gamma^l_{vs}
- Gamma^r_{vl} Gamma^l_{ms}`` so that Ric_{sv} = R^r_{srv} is positive on spheres.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .metric_models import MetricSpec, eval_metric, metric_derivatives


@dataclass
class GeometryPointData:
    christoffel: np.ndarray
    ricci_mixed: np.ndarray  # R^i_k = g^{ia} Ric_{ak}
    ricci_upper: np.ndarray  # R^{ib} = g^{ab} R^i_a
    ricci_lower: np.ndarray
    riemann: np.ndarray


@dataclass
class PerturbationCoefficients:
    """Pointwise coefficients of the eight terms of H1 - H0.

    Stored without the signs they carry in the expansion::

        ((H1 - H0) w)_k = second[i,j] d_i d_j w_k
                        + first_a[i,a,k] d_i w_a + first_b[a] d_a w_k
                        + first_c[j,a,k] d_j w_a + zeroth_a[a,k] w_a
                        - zeroth_b[b,k] w_b - zeroth_c[b,k] w_b + ricci[i,k] w_i
    """

    second_order: np.ndarray  # delta^{ij} - g^{ij}
    first_a: np.ndarray  # g^{ij} Gamma^a_jk          [i, a, k]
    first_b: np.ndarray  # g^{ij} Gamma^a_ij          [a]
    first_c: np.ndarray  # g^{ij} Gamma^a_ik          [j, a, k]
    zeroth_a: np.ndarray  # g^{ij} d_i Gamma^a_jk      [a, k]
    zeroth_b: np.ndarray  # g^{ij} Gamma^a_ij Gamma^b_ak  [b, k]
    zeroth_c: np.ndarray  # g^{ij} Gamma^a_ik Gamma^b_ja  [b, k]
    ricci: np.ndarray  # R^i_k                     [i, k]

    GROUPS = (
        "second_order",
        "first_a",
        "first_b",
        "first_c",
        "zeroth_a",
        "zeroth_b",
        "zeroth_c",
        "ricci",
    )

    def groups(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.GROUPS}

    @property
    def first_order(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.first_a, self.first_b, self.first_c

    @property
    def zeroth_order(self) -> tuple[np.ndarray, ...]:
        return self.zeroth_a, self.zeroth_b, self.zeroth_c, self.ricci


def _christoffel_from(g_upper, d1):
    # T[b,i,j] = d_i g_bj + d_j g_bi - d_b g_ij
    T = np.swapaxes(d1, -1, -2) + d1 - np.moveaxis(d1, -1, -3)
    return 0.5 * np.einsum("...ab,...bij->...aij", g_upper, T), T


def christoffel(spec: MetricSpec, x) -> np.ndarray:
    """Christoffel symbols of the second kind from analytic metric derivatives."""
    md = eval_metric(spec, x)
    gam, _ = _christoffel_from(md.g_upper, metric_derivatives(spec, x, 1))
    return gam


def christoffel_derivative(spec: MetricSpec, x) -> np.ndarray:
    """d_k Gamma^a_ij from analytic first and second metric derivatives."""
    md = eval_metric(spec, x)
    gu = md.g_upper
    d1 = metric_derivatives(spec, x, 1)
    d2 = metric_derivatives(spec, x, 2)
    _, T = _christoffel_from(gu, d1)
    dgu = -np.einsum("...am,...mnk,...nb->...abk", gu, d1, gu)
    # dT[b,i,j,k] = d_k d_i g_bj + d_k d_j g_bi - d_k d_b g_ij
    dT = np.swapaxes(d2, -2, -3) + d2 - np.moveaxis(d2, -2, -4)
    return 0.5 * np.einsum("...abk,...bij->...aijk", dgu, T) + 0.5 * np.einsum("...ab,...bijk->...aijk", gu, dT)


def _riemann(gam, dgam):
    # dgam[r, v, s, m] = d_m Gamma^r_vs
    term_d = np.einsum("...rvsm->...rsmv", dgam) - np.einsum("...rmsv->...rsmv", dgam)
    term_q = np.einsum("...rml,...lvs->...rsmv", gam, gam) - np.einsum("...rvl,...lms->...rsmv", gam, gam)
    return term_d + term_q


def curvature(spec: MetricSpec, x) -> GeometryPointData:
    md = eval_metric(spec, x)
    gam = christoffel(spec, x)
    dgam = christoffel_derivative(spec, x)
    riem = _riemann(gam, dgam)
    ric = np.einsum("...rsrv->...sv", riem)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    gu = md.g_upper
    mixed = np.einsum("...ia,...ak->...ik", gu, ric)
    upper = np.einsum("...ia,...ab->...ib", mixed, gu)
    return GeometryPointData(christoffel=gam, ricci_mixed=mixed, ricci_upper=upper, ricci_lower=ric, riemann=riem)


def perturbation_coefficients(spec: MetricSpec, x) -> PerturbationCoefficients:
    md = eval_metric(spec, x)
    gu = md.g_upper
    geo = curvature(spec, x)
    gam = geo.christoffel
    dgam = christoffel_derivative(spec, x)
    n = spec.dim
    trace_gam = np.einsum("...ij,...aij->...a", gu, gam)
    return PerturbationCoefficients(
        second_order=np.eye(n) - gu,
        first_a=np.einsum("...ij,...ajk->...iak", gu, gam),
        first_b=trace_gam,
        first_c=np.einsum("...ij,...aik->...jak", gu, gam),
        zeroth_a=np.einsum("...ij,...ajki->...ak", gu, dgam),
        zeroth_b=np.einsum("...a,...bak->...bk", trace_gam, gam),
        zeroth_c=np.einsum("...ij,...aik,...bja->...bk", gu, gam, gam),
        ricci=geo.ricci_mixed,
    )


def covariant_derivative(spec: MetricSpec, grid: Grid, omega: np.ndarray) -> np.ndarray:
    """``nabla_i omega_k`` at interior points by central differences.

    ``omega`` is a full-grid field of shape ``grid.shape + (n,)``.  Returns an
    array of shape ``(grid.n_interior, n, n)`` indexed ``[p, i, k]``.
    """
    if grid.points < 3:
        raise ValueError("grid too small for a three-point stencil")
    omega = np.asarray(omega)
    n = grid.n
    if omega.shape != grid.shape + (n,):
        raise ValueError(f"omega must have shape {grid.shape + (n,)}")
    flat = omega.reshape(-1, n)
    pts = grid.interior_points
    partial = np.empty((pts.size, n, n), dtype=omega.dtype)
    for i in range(n):
        s = grid.strides[i]
        partial[:, i, :] = (flat[pts + s] - flat[pts - s]) / (2.0 * grid.h)
    gam = christoffel(spec.with_dim(n), grid.interior_coords)
    return partial - np.einsum("paik,pa->pik", gam, flat[pts])
