"""Chebyshev expansions of functions of sparse symmetric matrices."""
from __future__ import annotations

import numpy as np
import scipy.fft
from scipy.special import erf, jv

MAX_DEGREE = 1 << 17


class ExpansionError(RuntimeError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


def gershgorin_bounds(A) -> tuple[float, float]:
    A = A.tocsr()
    diag = A.diagonal()
    absrow = np.asarray(abs(A).sum(axis=1)).ravel()
    rad = absrow - np.abs(diag)
    return float((diag - rad).min()), float((diag + rad).max())


def _scale(lo, hi):
    if not hi > lo:
        # degenerate spectrum, e.g. a multiple of the identity
        hi = lo + max(abs(lo), 1.0) * 1e-12
    return 0.5 * (hi + lo), 0.5 * (hi - lo)


def cheb_apply(A, V, coeffs, lo, hi):
    """``sum_k coeffs[k] T_k((A - c) / r) V`` by the three-term recurrence."""
    c, r = _scale(lo, hi)
    coeffs = np.asarray(coeffs)
    V = np.asarray(V)
    dtype = np.result_type(V.dtype, coeffs.dtype, np.float64)
    t_prev = V.astype(dtype, copy=True)
    out = coeffs[0] * t_prev
    if len(coeffs) == 1:
        return out
    t_cur = (A @ t_prev - c * t_prev) / r
    out = out + coeffs[1] * t_cur
    for ck in coeffs[2:]:
        t_next = 2.0 * (A @ t_cur - c * t_cur) / r - t_prev
        out += ck * t_next
        t_prev, t_cur = t_cur, t_next
    return out


def chebyshev_coefficients(func, lo, hi, tol=1e-10, start=64, max_degree=MAX_DEGREE, floor=0.0):
    """Coefficients of ``func`` on ``[lo, hi]`` with adaptive degree.

    Degree doubles until the trailing eighth of the coefficients is below
    ``tol`` times the largest one (or times ``floor`` if that is larger, for
    functions known to be of unit size); the tail is then trimmed.
    """
    c, r = _scale(lo, hi)
    K = start
    while True:
        theta = np.pi * (np.arange(K) + 0.5) / K
        vals = func(c + r * np.cos(theta))
        coef = scipy.fft.dct(vals, type=2) / K
        coef[0] *= 0.5
        scale = max(np.abs(coef).max(), floor, 1e-300)
        tail = np.abs(coef[-max(K // 8, 4):]).max()
        if tail <= tol * scale:
            keep = np.nonzero(np.abs(coef) > 0.1 * tol * scale)[0]
            return coef[: keep.max() + 1 if keep.size else 1]
        if 2 * K > max_degree:
            raise ExpansionError(f"Chebyshev expansion did not converge below degree {max_degree}", tail / scale)
        K *= 2


def smooth_indicator(a, b, sigma):
    """``1_[a,b]`` smoothed with error-function edges of width ``sigma``."""

    def f(x):
        return 0.5 * (erf((x - a) / sigma) - erf((x - b) / sigma))

    return f


def jackson_kernel(n_moments: int) -> np.ndarray:
    m = np.arange(n_moments)
    N = n_moments + 1
    return ((N - m) * np.cos(np.pi * m / N) + np.sin(np.pi * m / N) / np.tan(np.pi / N)) / N


def propagator_coefficients(t, lo, hi, tol, max_terms=MAX_DEGREE):
    """Coefficients of ``exp(-i A t)`` in the scaled Chebyshev basis.

    ``exp(-i x tau) = J_0(tau) + 2 sum_k (-i)^k J_k(tau) T_k(x)`` with
    ``tau = r t``; the global phase ``exp(-i c t)`` is folded in.  Truncation
    keeps the discarded tail ``2 sum |J_k|`` below ``tol``.
    Returns ``(coeffs, bound)``.
    """
    c, r = _scale(lo, hi)
    tau = r * t
    K = int(abs(tau) + 10.0 * abs(tau) ** (1.0 / 3.0) + 30)
    while True:
        if K > max_terms:
            k = np.arange(max_terms + 1)
            bound = 2.0 * np.abs(jv(k[-50:], tau)).sum()
            raise ExpansionError(f"propagation needs more than {max_terms} Chebyshev terms", bound)
        k = np.arange(K + 1)
        J = jv(k, tau)
        tail = 2.0 * np.cumsum(np.abs(J)[::-1])[::-1]  # tail[k] = 2 sum_{j>=k} |J_j|
        ok = np.nonzero((tail <= tol) & (k > abs(tau)))[0]
        if ok.size:
            cut = ok[0]
            break
        K *= 2
    coeffs = 2.0 * (-1j) ** k[:cut] * J[:cut]
    coeffs[0] = J[0]
    coeffs = coeffs * np.exp(-1j * c * t)
    return coeffs, float(tail[cut])
