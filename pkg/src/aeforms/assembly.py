"""Finite-difference assembly of the flat and curved Laplacians on 1-forms.

Operators act on interior unknowns (see :mod:`aeforms.grid`).  Physical units:
``H0``, ``W`` and ``V`` carry 1/length^2; ``S`` and ``M`` carry an extra cell
volume ``h^n`` so that generalized eigenvalues of ``(S, M)`` compare directly
with eigenvalues of ``H0``.

Two independent routes reach the strong-form operator:

* ``W`` composes the covariant derivative twice symbolically on 2-jets of the
  field and contracts with ``-g^{ij}`` (plus the Ricci term);
* ``V`` stencils each of the eight coefficient groups of ``H1 - H0``
  separately, and ``H0`` is a Kronecker sum of 1-D second differences.

``W == H0 + V`` is asserted to round-off on every assembly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import christoffel, christoffel_derivative, curvature, perturbation_coefficients
from .grid import Grid
from .metric_models import MetricSpec, eval_metric

TRANSCRIPTION_RTOL = 1e-12


class AssemblyError(RuntimeError):
    pass


class ConsistencyError(AssemblyError):
    """Two assembly routes for the same operator disagree."""


def _csr(rows, cols, vals, shape) -> sp.csr_matrix:
    mat = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    """Block-diagonal CSR matrix from an array of shape ``(P, n, n)``."""
    P, n, _ = blocks.shape
    base = np.arange(P)[:, None, None] * n
    rows = np.broadcast_to(base + np.arange(n)[None, :, None], blocks.shape)
    cols = np.broadcast_to(base + np.arange(n)[None, None, :], blocks.shape)
    return _csr(rows.ravel(), cols.ravel(), blocks.ravel(), (P * n, P * n))


def assemble_h0(grid: Grid) -> sp.csr_matrix:
    """Componentwise Dirichlet Laplacian ``-sum_j d^2/dx_j^2``, scaled by 1/h^2."""
    m = grid.points - 2
    lap1 = sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1], format="csr")
    eye1 = sp.identity(m, format="csr")
    scalar = sp.csr_matrix((m**grid.n, m**grid.n))
    for d in range(grid.n):
        term = sp.identity(1, format="csr")
        for e in range(grid.n):
            term = sp.kron(term, lap1 if e == d else eye1, format="csr")
        scalar = scalar + term
    H0 = sp.kron(scalar, sp.identity(grid.n), format="csr") / grid.h**2
    H0.eliminate_zeros()
    H0.sort_indices()
    return H0


def mass_blocks(spec: MetricSpec, grid: Grid) -> np.ndarray:
    """``sqrt(g) g^{ij}`` at interior points (without the cell volume)."""
    md = eval_metric(spec, grid.interior_coords)
    blocks = md.sqrt_det[:, None, None] * md.g_upper
    lam = np.linalg.eigvalsh(blocks)
    bad = np.nonzero(lam.min(axis=1) <= 0)[0]
    if bad.size:
        x = grid.interior_coords[bad[0]]
        raise AssemblyError(f"mass block is not positive definite at x={x.tolist()}")
    return blocks


def assemble_mass(spec: MetricSpec, grid: Grid) -> sp.csr_matrix:
    return _block_diag(mass_blocks(spec, grid) * grid.cell_volume)


def _block_power(blocks: np.ndarray, power: float) -> np.ndarray:
    lam, vec = np.linalg.eigh(blocks)
    out = np.einsum("pij,pj,pkj->pik", vec, lam**power, vec)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


# -- strong-form stencils ---------------------------------------------------------------


def _stencil(grid: Grid, second=None, first=None, zeroth=None) -> sp.csr_matrix:
    """Central-difference matrix of a linear second-order operator on 1-forms.

    Coefficients live at interior points: ``second[p, k, a, b, al]`` multiplies
    ``d_a d_b w_al`` in row ``k``, ``first[p, k, m, al]`` multiplies
    ``d_m w_al`` and ``zeroth[p, k, al]`` multiplies ``w_al``.  Pure second
    derivatives use the compact three-point stencil, mixed ones the four-corner
    stencil, first derivatives the centred difference.
    """
    n, h = grid.n, grid.h
    P = grid.n_interior
    shape3 = (P, n, n)
    if second is None:
        second = np.zeros((P, n, n, n, n))
    if first is None:
        first = np.zeros((P, n, n, n))
    if zeroth is None:
        zeroth = np.zeros(shape3)
    pts = grid.interior_points
    strides = grid.strides
    lookup = grid.interior_index

    entries: list[tuple[int, np.ndarray]] = []
    centre = zeroth.copy()
    for a in range(n):
        saa = second[:, :, a, a, :]
        centre = centre - 2.0 * saa / h**2
        entries.append((strides[a], saa / h**2 + first[:, :, a, :] / (2.0 * h)))
        entries.append((-strides[a], saa / h**2 - first[:, :, a, :] / (2.0 * h)))
        for b in range(a + 1, n):
            c = (second[:, :, a, b, :] + second[:, :, b, a, :]) / (4.0 * h**2)
            entries.append((strides[a] + strides[b], c))
            entries.append((strides[a] - strides[b], -c))
            entries.append((-strides[a] + strides[b], -c))
            entries.append((-strides[a] - strides[b], c))
    entries.append((0, centre))

    kk, aa = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rows, cols, vals = [], [], []
    for offset, coef in entries:
        q = lookup[pts + offset]
        keep = q >= 0
        p_idx = np.nonzero(keep)[0]
        r = p_idx[:, None, None] * n + kk[None]
        c = q[keep][:, None, None] * n + aa[None]
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(coef[keep].ravel())
    N = grid.n_dof
    return _csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (N, N))


def _weitzenbock_jet(spec: MetricSpec, x: np.ndarray):
    """2-jet coefficients of ``-g^{ij} nabla_i nabla_j w + Ric(w)`` at points ``x``.

    Built by composing the covariant derivative with the product rule rather
    than from the expanded eight-term formula.
    """
    n = spec.dim
    eye = np.eye(n)
    gu = eval_metric(spec, x).g_upper
    geo = curvature(spec, x)
    gam = geo.christoffel
    dgam = christoffel_derivative(spec, x)

    # nabla_j w_k  = Z1[j,k,al] w_al + G1[j,k,m,al] d_m w_al
    Z1 = -np.moveaxis(gam, 1, 3)
    G1 = np.einsum("jm,ka->jkma", eye, eye)

    # d_i (nabla_j w_k): coefficients differentiate, the jet shifts up one order
    Z2 = -np.einsum("pajki->pijka", dgam)
    G2 = np.einsum("im,pjka->pijkma", eye, Z1)
    H2 = np.einsum("ib,jkma->ijkmba", eye, G1)  # d_i d_m w_al, index order [i,j,k,a=m,b=i,al]

    # nabla_i nabla_j w_k = d_i(nabla_j w_k) - Gam^l_ij nabla_l w_k - Gam^l_ik nabla_j w_l
    Z2 = Z2 - np.einsum("plij,plka->pijka", gam, Z1) - np.einsum("plik,pjla->pijka", gam, Z1)
    G2 = G2 - np.einsum("plij,lkma->pijkma", gam, G1) - np.einsum("plik,jlma->pijkma", gam, G1)

    zeroth = -np.einsum("pij,pijka->pka", gu, Z2) + np.swapaxes(geo.ricci_mixed, 1, 2)
    first = -np.einsum("pij,pijkma->pkma", gu, G2)
    second = -np.einsum("pij,ijkabz->pkabz", gu, H2)
    return second, first, zeroth


def _perturbation_jets(spec: MetricSpec, x: np.ndarray) -> dict[str, tuple]:
    """One (second, first, zeroth) jet per coefficient group of ``H1 - H0``."""
    n = spec.dim
    eye = np.eye(n)
    pc = perturbation_coefficients(spec, x)
    P = x.shape[0]
    z2 = np.zeros((P, n, n, n, n))
    z1 = np.zeros((P, n, n, n))
    z0 = np.zeros((P, n, n))
    return {
        "second_order": (np.einsum("pab,kz->pkabz", pc.second_order, eye), z1, z0),
        "first_a": (z2, np.einsum("pizk->pkiz", pc.first_a), z0),
        "first_b": (z2, np.einsum("pm,kz->pkmz", pc.first_b, eye), z0),
        "first_c": (z2, np.einsum("pjzk->pkjz", pc.first_c), z0),
        "zeroth_a": (z2, z1, np.swapaxes(pc.zeroth_a, 1, 2)),
        "zeroth_b": (z2, z1, -np.swapaxes(pc.zeroth_b, 1, 2)),
        "zeroth_c": (z2, z1, -np.swapaxes(pc.zeroth_c, 1, 2)),
        "ricci": (z2, z1, np.swapaxes(pc.ricci, 1, 2)),
    }


def assemble_h1_weitzenbock(spec: MetricSpec, grid: Grid, H0: sp.csr_matrix | None = None):
    """Strong-form operator ``W`` and perturbation ``V``; raises if ``W != H0 + V``."""
    spec = spec.with_dim(grid.n)
    x = grid.interior_coords
    W = _stencil(grid, *_weitzenbock_jet(spec, x))
    V = sp.csr_matrix((grid.n_dof, grid.n_dof))
    for jets in _perturbation_jets(spec, x).values():
        V = V + _stencil(grid, *jets)
    V.eliminate_zeros()
    V.sort_indices()
    if H0 is None:
        H0 = assemble_h0(grid)
    defect = transcription_defect(W, H0, V)
    if defect > TRANSCRIPTION_RTOL:
        raise ConsistencyError(f"W - H0 - V relative defect {defect:.3e} exceeds {TRANSCRIPTION_RTOL:g}")
    return W, V


def transcription_defect(W, H0, V) -> float:
    diff = W - H0 - V
    scale = abs(W).max()
    if scale == 0:
        return float(abs(diff).max()) if diff.nnz else 0.0
    return float(abs(diff).max() / scale) if diff.nnz else 0.0


# -- weak form --------------------------------------------------------------------------


@dataclass
class EdgeSamples:
    """Covariant-derivative samples on the edges of one grid direction."""

    direction: int
    D: sp.csr_matrix  # unknowns -> (edge, component) samples of nabla_i w_al
    weights: np.ndarray  # [e, al, be] = g^{ii} g^{al be} sqrt(g) h^n at the midpoint


def edge_samples(spec: MetricSpec, grid: Grid) -> list[EdgeSamples]:
    """Midpoint covariant differences for every edge touching the interior.

    On the edge from ``x`` to ``x + h e_i`` with midpoint ``m``::

        nabla_i w_al ~ (w_al(x+) - w_al(x)) / h - Gam^be_{i al}(m) (w_be(x+) + w_be(x)) / 2
    """
    n, h = grid.n, grid.h
    spec = spec.with_dim(n)
    lookup = grid.interior_index
    mi = grid.multi_index
    out = []
    for i in range(n):
        lo = np.nonzero(mi[:, i] < grid.points - 1)[0]
        hi = lo + grid.strides[i]
        q_lo, q_hi = lookup[lo], lookup[hi]
        keep = (q_lo >= 0) | (q_hi >= 0)
        lo, hi, q_lo, q_hi = lo[keep], hi[keep], q_lo[keep], q_hi[keep]
        mid = grid.coords[lo].copy()
        mid[:, i] += 0.5 * h
        md = eval_metric(spec, mid)
        gu = md.g_upper
        off = gu - np.einsum("pii->pi", gu)[:, :, None] * np.eye(n)
        if np.abs(off).max() > 1e-14 * np.abs(gu).max():
            raise NotImplementedError("weak-form assembly supports diagonal metrics only")
        gam = christoffel(spec, mid)
        coup = np.swapaxes(gam[:, :, i, :], 1, 2)  # [e, al, be] = Gam^be_{i al}
        eye = np.eye(n)
        E = lo.size
        ee, al, be = np.meshgrid(np.arange(E), np.arange(n), np.arange(n), indexing="ij")
        rows, cols, vals = [], [], []
        for q, sign in ((q_hi, 1.0), (q_lo, -1.0)):
            coef = sign * eye[None] / h - 0.5 * coup
            ok = q[ee] >= 0
            rows.append((ee * n + al)[ok])
            cols.append((q[ee] * n + be)[ok])
            vals.append(coef[ok])
        D = _csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (E * n, grid.n_dof))
        weights = gu[:, i, i][:, None, None] * gu * md.sqrt_det[:, None, None] * grid.cell_volume
        out.append(EdgeSamples(direction=i, D=D, weights=weights))
    return out


def curvature_blocks(spec: MetricSpec, grid: Grid) -> np.ndarray:
    """``sqrt(g) R^{ib}`` at interior points, symmetrized (no cell volume)."""
    spec = spec.with_dim(grid.n)
    x = grid.interior_coords
    geo = curvature(spec, x)
    sq = eval_metric(spec, x).sqrt_det
    R = 0.5 * (geo.ricci_upper + np.swapaxes(geo.ricci_upper, 1, 2))
    return sq[:, None, None] * R


def assemble_h1_form(spec: MetricSpec, grid: Grid, *, parts: bool = False):
    """Symmetric stiffness ``S`` with ``w^T S w`` the quadrature of the curved form.

    Gradient part ``D^T Wt D`` summed over edge directions plus the nodal
    curvature part.  With ``parts=True`` returns ``(S, S_grad, S_curv)``.
    """
    spec = spec.with_dim(grid.n)
    S_grad = sp.csr_matrix((grid.n_dof, grid.n_dof))
    for es in edge_samples(spec, grid):
        S_grad = S_grad + es.D.T @ _block_diag(es.weights) @ es.D
    S_grad = (0.5 * (S_grad + S_grad.T)).tocsr()
    S_curv = _block_diag(curvature_blocks(spec, grid) * grid.cell_volume)
    S = (S_grad + S_curv).tocsr()
    for mat in (S, S_grad):
        mat.eliminate_zeros()
        mat.sort_indices()
    if parts:
        return S, S_grad, S_curv
    return S


# -- bundle -----------------------------------------------------------------------------


@dataclass
class AssembledOperators:
    spec: MetricSpec
    grid: Grid
    H0: sp.csr_matrix
    M: sp.csr_matrix
    S: sp.csr_matrix
    S_grad: sp.csr_matrix
    S_curv: sp.csr_matrix
    W: sp.csr_matrix
    V: sp.csr_matrix
    blocks: np.ndarray  # sqrt(g) g^{ij} per interior point, without h^n
    provenance: dict = field(default_factory=dict)

    @cached_property
    def M_half(self) -> sp.csr_matrix:
        return _block_diag(_block_power(self.blocks * self.grid.cell_volume, 0.5))

    @cached_property
    def M_inv_half(self) -> sp.csr_matrix:
        return _block_diag(_block_power(self.blocks * self.grid.cell_volume, -0.5))

    @cached_property
    def M_inv(self) -> sp.csr_matrix:
        return _block_diag(_block_power(self.blocks * self.grid.cell_volume, -1.0))

    @cached_property
    def A_sym(self) -> sp.csr_matrix:
        """``M^{-1/2} S M^{-1/2}``: the pencil reduced to one symmetric matrix."""
        A = self.M_inv_half @ self.S @ self.M_inv_half
        A = 0.5 * (A + A.T)
        A = A.tocsr()
        A.sort_indices()
        return A


def assemble(spec: MetricSpec, grid: Grid) -> AssembledOperators:
    spec = spec.with_dim(grid.n)
    H0 = assemble_h0(grid)
    blocks = mass_blocks(spec, grid)
    M = _block_diag(blocks * grid.cell_volume)
    S, S_grad, S_curv = assemble_h1_form(spec, grid, parts=True)
    W, V = assemble_h1_weitzenbock(spec, grid, H0)
    return AssembledOperators(
        spec=spec,
        grid=grid,
        H0=H0,
        M=M,
        S=S,
        S_grad=S_grad,
        S_curv=S_curv,
        W=W,
        V=V,
        blocks=blocks,
        provenance={"metric": spec.to_dict(), "grid": grid.to_dict()},
    )


def apply_J_and_adjoint(ops: AssembledOperators, direction: str, vec: np.ndarray) -> np.ndarray:
    """Apply the identification map ``J`` or its adjoint ``J*``.

    ``J`` is the identity on coefficients; ``J*`` multiplies pointwise by
    ``sqrt(g) g^{ij}``, the adjoint of ``J`` between the Euclidean and curved
    inner products.
    """
    vec = np.asarray(vec)
    if direction == "J":
        return vec.copy()
    if direction in ("adjoint", "J*"):
        P, n = ops.grid.n_interior, ops.grid.n
        v = vec.reshape(P, n, *vec.shape[1:])
        return np.einsum("pij,pj...->pi...", ops.blocks, v).reshape(vec.shape)
    raise ValueError(f"direction must be 'J' or 'adjoint', got {direction!r}")


def jstar_j_minus_identity(ops: AssembledOperators) -> np.ndarray:
    """Blocks of ``J*J - I``: ``sqrt(g) g^{jk} - delta^{jk}`` per interior point."""
    return ops.blocks - np.eye(ops.grid.n)
