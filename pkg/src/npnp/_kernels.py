"""Hot loops, each with a numba and a pure-numpy implementation.

Set ``NPNP_DISABLE_NUMBA=1`` to force the numpy path (also used when numba
is not importable).  Both paths are importable by name for tests and the
benchmark script.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_DISABLED = os.environ.get("NPNP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = numba is not None and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# -- gradient and Hessian of the log-det barrier --------------------------------

def grad_hess_numpy(W, b, tau, pairs, onehot):
    """g_k = tau*b_k - tr(W B_k),  H_kl = -tr(W B_k W B_l).

    ``W`` is the (pseudo-)inverse of the slack matrix, ``B_k`` the 0/1
    pattern of monomial k in the Gram matrix.
    """
    n = onehot.shape[1]
    g = tau * b - np.bincount(pairs.ravel(), weights=W.ravel(), minlength=n)
    H = -(onehot.T @ np.kron(W, W) @ onehot)
    return g, 0.5 * (H + H.T)


def _grad_hess_loops(W, b, tau, pairs, onehot):
    m = W.shape[0]
    n = b.shape[0]
    g = tau * b
    H = np.zeros((n, n))
    for i in range(m):
        for j in range(m):
            g[pairs[i, j]] -= W[j, i]
    # H[k, l] -= W[i, j] W[p, q] over pairs (j, p) -> k and (q, i) -> l
    for j in range(m):
        for p in range(m):
            k = pairs[j, p]
            for i in range(m):
                wij = W[i, j]
                for q in range(m):
                    H[k, pairs[q, i]] -= wij * W[p, q]
    for k in range(n):
        for m2 in range(k + 1, n):
            s = 0.5 * (H[k, m2] + H[m2, k])
            H[k, m2] = s
            H[m2, k] = s
    return g, H


# -- exact line search on the barrier ray --------------------------------------

_EPS = np.finfo(np.float64).eps


def _phi_derivs(s, lam, slope):
    d1 = slope
    d2 = 0.0
    mag = abs(slope)
    for x in lam:
        ratio = x / (1.0 - s * x)
        d1 -= ratio
        d2 -= ratio * ratio
        mag += abs(ratio)
    return d1, d2, mag


def line_search_root_numpy(lam, slope, lo, hi, tol, max_iter=200):
    """Root of phi'(s) = slope - sum(lam / (1 - s lam)) on the bracket (lo, hi).

    phi' is strictly decreasing there; ``phi'(lo) > 0 > phi'(hi)`` is assumed.
    Safeguarded Newton: fall back to bisection whenever the Newton iterate
    leaves the bracket.  Stops once |phi'| is below ``tol`` or below the
    rounding error of its own evaluation.
    """
    s = 0.5 * (lo + hi) if lo > 0.0 or hi < 0.0 else 0.0
    for _ in range(max_iter):
        ratio = lam / (1.0 - s * lam)
        d1 = slope - np.sum(ratio)
        if abs(d1) <= tol or abs(d1) <= 64.0 * _EPS * (abs(slope) + np.sum(np.abs(ratio))):
            return s
        d2 = -np.sum(ratio * ratio)
        if d1 > 0.0:
            lo = s
        else:
            hi = s
        s_new = s - d1 / d2
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if s_new == s or hi - lo <= 4 * _EPS * max(1.0, abs(s)):
            return s_new
        s = s_new
    return s


def _line_search_root_loops(lam, slope, lo, hi, tol, max_iter=200):
    s = 0.5 * (lo + hi) if lo > 0.0 or hi < 0.0 else 0.0
    for _ in range(max_iter):
        d1, d2, mag = _phi_derivs(s, lam, slope)
        if abs(d1) <= tol or abs(d1) <= 64.0 * _EPS * mag:
            return s
        if d1 > 0.0:
            lo = s
        else:
            hi = s
        s_new = s - d1 / d2
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if s_new == s or hi - lo <= 4 * _EPS * max(1.0, abs(s)):
            return s_new
        s = s_new
    return s


# -- batch evaluation of r(q)^T M r(q) -----------------------------------------

def quartic_costs_numpy(quats, M):
    q1, q2, q3, q4 = quats.T
    r = np.stack([
        q1 * q1 + q2 * q2 - q3 * q3 - q4 * q4,
        2 * q2 * q3 - 2 * q1 * q4,
        2 * q2 * q4 + 2 * q1 * q3,
        2 * q2 * q3 + 2 * q1 * q4,
        q1 * q1 - q2 * q2 + q3 * q3 - q4 * q4,
        2 * q3 * q4 - 2 * q1 * q2,
        2 * q2 * q4 - 2 * q1 * q3,
        2 * q3 * q4 + 2 * q1 * q2,
        q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4,
    ], axis=1)
    return ((r @ M) * r).sum(axis=1)


def _quartic_costs_loops(quats, M):
    n = quats.shape[0]
    out = np.empty(n)
    r = np.empty(9)
    for k in range(n):
        q1, q2, q3, q4 = quats[k, 0], quats[k, 1], quats[k, 2], quats[k, 3]
        r[0] = q1 * q1 + q2 * q2 - q3 * q3 - q4 * q4
        r[1] = 2 * q2 * q3 - 2 * q1 * q4
        r[2] = 2 * q2 * q4 + 2 * q1 * q3
        r[3] = 2 * q2 * q3 + 2 * q1 * q4
        r[4] = q1 * q1 - q2 * q2 + q3 * q3 - q4 * q4
        r[5] = 2 * q3 * q4 - 2 * q1 * q2
        r[6] = 2 * q2 * q4 - 2 * q1 * q3
        r[7] = 2 * q3 * q4 + 2 * q1 * q2
        r[8] = q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4
        acc = 0.0
        for i in range(9):
            ri = r[i]
            for j in range(9):
                acc += ri * M[i, j] * r[j]
        out[k] = acc
    return out


if numba is not None:
    _jit = numba.njit(cache=True, fastmath=False)
    _phi_derivs = _jit(_phi_derivs)
    grad_hess_numba = _jit(_grad_hess_loops)
    line_search_root_numba = _jit(_line_search_root_loops)
    quartic_costs_numba = _jit(_quartic_costs_loops)
else:  # pragma: no cover
    grad_hess_numba = line_search_root_numba = quartic_costs_numba = None

if USE_NUMBA:
    grad_hess = grad_hess_numba
    line_search_root = line_search_root_numba
    quartic_costs = quartic_costs_numba
else:
    grad_hess = grad_hess_numpy
    line_search_root = line_search_root_numpy
    quartic_costs = quartic_costs_numpy

BACKENDS = {
    "numpy": dict(grad_hess=grad_hess_numpy, line_search_root=line_search_root_numpy,
                  quartic_costs=quartic_costs_numpy),
}
if numba is not None:
    BACKENDS["numba"] = dict(grad_hess=grad_hess_numba, line_search_root=line_search_root_numba,
                             quartic_costs=quartic_costs_numba)
