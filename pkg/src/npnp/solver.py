"""Barrier-method Newton solver for the 70-variable dual SDP of PnP.

The dual variable ``y`` follows the sign convention of ``c - A^T y``: feasible
points have ``y[const] = -1`` and ``-y`` is a pseudo-moment vector.  On the
feasible set the slack ``S(y)`` always annihilates the coefficient vector of
``|q|^2 - 1``, so the log-det barrier is evaluated on the orthogonal
complement of that vector (a 14x14 block); ``S`` itself is only PSD.
"""
from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import LinAlgWarning

from . import _kernels
from .errors import ExtractionError, NPnPError, UnboundedDualError
from .geometry import (
    Alignment,
    Correspondences,
    build_M,
    cost,
    polish_quaternion,
    quat_to_r9,
    r9_to_rotation,
    recover_translation,
)
from .sos import SosSystem, build_b, sos_system

# bound on |m(q)|^2 over the unit sphere for the degree-2 Gram basis
_GRAM_NORM_BOUND = 3.0
# decrements below this are inside the quadratic-convergence region
_STALL_DEC2 = 1e-5


class Status(str, enum.Enum):
    CERTIFIED = "Certified"
    UNCERTIFIED = "Uncertified"
    MAX_ITERATIONS = "MaxIterations"
    DEGENERATE = "Degenerate"


class DegenerateKKTError(NPnPError):
    pass


class BoundaryError(NPnPError):
    """The slack block is not positive definite at the requested point."""


@dataclass
class BarrierParams:
    epsilon: float = 1e-6
    delta: float = 1e4
    mu: float = 50.0
    t0: float | None = None
    max_newton_per_stage: int = 50
    max_stages: int = 20
    max_newton_total: int = 60
    certify: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.mu > 1:
            raise ValueError("mu must exceed 1")
        if self.t0 is None:
            self.t0 = 1.0 / (140.0 * self.delta ** 2)
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")


@dataclass
class DualStats:
    status: Status = Status.CERTIFIED
    newton_iterations: int = 0
    stages: int = 0
    per_stage: list = field(default_factory=list)
    tau: float = 0.0
    tau_last: float = 0.0
    eps_scaled: float = 0.0
    b_norm: float = 1.0
    lower_bound: float = float("nan")
    trace: list | None = None


@dataclass
class SolveReport:
    alignment: Alignment | None
    achieved_cost: float
    dual_bound: float
    certificate_gap: float
    newton_iterations: int
    stages: int
    status: Status
    dual_objective: float = float("nan")
    low_confidence: bool = False
    quaternion: np.ndarray | None = None
    y: np.ndarray | None = None
    trace: list | None = None


# -- barrier calculus ----------------------------------------------------------

def face_block(y, system: SosSystem) -> np.ndarray:
    V = system.face
    return V.T @ system.slack(y) @ V


def barrier_value(y, b, tau, system: SosSystem) -> float:
    """f_tau(y) = tau b^T y + log det of the slack on its face; -inf outside."""
    T = face_block(y, system)
    try:
        L = np.linalg.cholesky(T)
    except np.linalg.LinAlgError:
        return -np.inf
    return float(tau * (b @ y) + 2.0 * np.log(np.diag(L)).sum())


def _face_inverse(y, system):
    T = face_block(y, system)
    try:
        L = np.linalg.cholesky(T)
    except np.linalg.LinAlgError as exc:
        raise BoundaryError("slack block lost positive definiteness") from exc
    Linv = np.linalg.inv(L)
    V = system.face @ Linv.T
    return V @ V.T, L


def gradient_hessian(y, b, tau, system: SosSystem):
    """Gradient and Hessian of f_tau at ``y``, plus the slack pseudo-inverse."""
    W, _ = _face_inverse(y, system)
    W = np.ascontiguousarray(W)
    g, H = _kernels.grad_hess(W, np.asarray(b, dtype=float), float(tau), system.pairs, system.onehot)
    return g, H, W


def newton_direction(g, H, eq, residual, return_multiplier=False, refine=2):
    """Solve the (70+16) KKT system [[H, E], [E^T, 0]] x = [-g, residual].

    Returns the first 70 entries (the step); the trailing 16 are the
    equality multipliers.
    """
    n, m = eq.shape
    Q = np.zeros((n + m, n + m))
    Q[:n, :n] = H
    Q[:n, n:] = eq
    Q[n:, :n] = eq.T
    # symmetric diagonal equilibration; H spans many orders of magnitude late in a solve
    d = np.ones(n + m)
    d[:n] = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(H)), 1e-300))
    Qs = Q * d[:, None] * d[None, :]
    z = np.concatenate([-np.asarray(g), np.asarray(residual)])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            lu = scipy.linalg.lu_factor(Qs, check_finite=False)
    except (LinAlgWarning, ValueError) as exc:
        raise DegenerateKKTError("singular KKT matrix") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise DegenerateKKTError("singular KKT matrix")
    zs = z * d
    xs = scipy.linalg.lu_solve(lu, zs, check_finite=False)
    for _ in range(refine):
        xs = xs + scipy.linalg.lu_solve(lu, zs - Qs @ xs, check_finite=False)
    x = xs * d
    if not np.isfinite(x).all():
        raise DegenerateKKTError("non-finite Newton direction")
    if return_multiplier:
        return x[:n], x[n:]
    return x[:n]


def newton_decrement2(v, H) -> float:
    """Squared Newton decrement v^T (-H) v; equals g^T (-H)^-1 g on the tangent space."""
    return float(-(v @ H @ v))


def _step_eigenvalues(y, v, system):
    """Generalized eigenvalues of the face slack pencil along ``v``."""
    T = face_block(y, system)
    L = np.linalg.cholesky(T)
    Vv = system.face.T @ np.asarray(v)[system.pairs] @ system.face
    Z = np.linalg.solve(L, np.linalg.solve(L, Vv).T)
    return np.linalg.eigvalsh(0.5 * (Z + Z.T))


def step_gain(s, lam, slope) -> float:
    """f_tau(y + s v) - f_tau(y), evaluated without cancellation."""
    return float(s * slope + np.sum(np.log1p(-s * lam)))


def exact_line_search(y, v, b, tau, system: SosSystem, lam=None) -> float:
    """Maximizer of s -> f_tau(y + s v) along the feasible segment."""
    if lam is None:
        lam = _step_eigenvalues(y, v, system)
    slope = float(tau * (np.asarray(b) @ v))
    d0 = slope - lam.sum()
    if d0 == 0.0:
        return 0.0
    # relative form; tighter than 1e-12 * (1 + |phi'(0)|) and keeps tiny late steps exact
    tol = 1e-12 * abs(d0)
    if d0 > 0:
        hi = 1.0 / lam[-1] if lam[-1] > 0 else np.inf
        if not np.isfinite(hi):
            if slope >= 0:
                raise UnboundedDualError("barrier objective unbounded along search direction")
            hi = 1.0
            while slope - np.sum(lam / (1.0 - hi * lam)) > 0:
                hi *= 2.0
        s = _kernels.line_search_root(lam, slope, 0.0, hi, tol)
    else:
        lo = 1.0 / lam[0] if lam[0] < 0 else -np.inf
        if not np.isfinite(lo):
            if slope <= 0:
                raise UnboundedDualError("barrier objective unbounded along search direction")
            lo = -1.0
            while slope - np.sum(lam / (1.0 - lo * lam)) < 0:
                lo *= 2.0
        s = _kernels.line_search_root(lam, slope, lo, 0.0, tol)
    return float(s)


# -- barrier loop --------------------------------------------------------------

def _center(y, tau, b_unit, eps_s, system, params, stats):
    """One barrier stage: Newton steps until the decrement test passes."""
    its = 0
    prev_dec2 = np.inf
    while True:
        if its >= params.max_newton_per_stage or stats.newton_iterations >= params.max_newton_total:
            stats.status = Status.MAX_ITERATIONS
            break
        g, H, _ = gradient_hessian(y, b_unit, tau, system)
        v = newton_direction(g, H, system.eq, system.eq_residual(y))
        dec2 = newton_decrement2(v, H)
        if dec2 <= 0.0 or not np.any(v):
            # already at the stage maximizer to working precision
            its += 1
            stats.newton_iterations += 1
            break
        if dec2 < _STALL_DEC2 and dec2 > 0.5 * prev_dec2:
            # Newton has stopped contracting: the decrement sits at its rounding floor
            break
        prev_dec2 = dec2
        f_before = barrier_value(y, b_unit, tau, system) if stats.trace is not None else None
        lam = _step_eigenvalues(y, v, system)
        slope = float(tau * (b_unit @ v))
        if dec2 < 2.0 * eps_s:
            # quadratic regime: the exact maximizer is ~1 and phi'(0) is
            # dominated by rounding in the equality multiplier
            s = 1.0
        else:
            s = exact_line_search(y, v, b_unit, tau, system, lam=lam)
        # rounding can put the exact maximizer a hair outside the cone
        while s > 0 and (np.any(s * lam >= 1.0) or not np.isfinite(barrier_value(y + s * v, b_unit, tau, system))):
            s *= 0.5
        gain = step_gain(s, lam, slope) if s > 0 else 0.0
        if s <= 0.0 or gain < 0.0:
            # no ascent left at working precision
            break
        y = y + s * v
        its += 1
        stats.newton_iterations += 1
        if stats.trace is not None:
            T = face_block(y, system)
            S = system.slack(y)
            stats.trace.append(dict(
                stage=stats.stages, tau=tau, step=s, decrement2=dec2, gain=gain,
                f_before=f_before, f_after=barrier_value(y, b_unit, tau, system),
                min_eig_face=float(np.linalg.eigvalsh(T)[0]),
                min_eig_slack=float(np.linalg.eigvalsh(S)[0]),
                slack_norm=float(np.linalg.norm(S)),
                eq_residual=float(np.abs(system.eq_residual(y)).max()),
            ))
        if dec2 < 2.0 * eps_s:
            break
    stats.per_stage.append(its)
    stats.stages += 1
    stats.tau_last = tau
    return y


def solve_dual(b, params: BarrierParams | None = None, start=None, system: SosSystem | None = None,
               record=False):
    """Run the barrier method on the dual SDP with objective vector ``b``.

    Returns the final dual point and a :class:`DualStats`.  ``b`` is scaled
    to unit norm internally and the accuracy rescaled accordingly.
    """
    params = params or BarrierParams()
    system = system or sos_system()
    y = np.array(system.analytic_center if start is None else start, dtype=float)
    b = np.asarray(b, dtype=float)
    b_norm = float(np.linalg.norm(b))
    if not np.isfinite(b).all() or b_norm == 0.0:
        raise ValueError("objective vector must be finite and nonzero")
    b_unit = b / b_norm
    eps_s = params.epsilon / (b_norm * np.linalg.norm(y))
    stats = DualStats(eps_scaled=eps_s, b_norm=b_norm, trace=[] if record else None)
    tau = params.t0
    try:
        while tau < 1.0 / eps_s:
            if stats.stages >= params.max_stages:
                stats.status = Status.MAX_ITERATIONS
                break
            y = _center(y, tau, b_unit, eps_s, system, params, stats)
            if stats.status is Status.MAX_ITERATIONS:
                break
            tau *= params.mu
    except DegenerateKKTError:
        stats.status = Status.DEGENERATE
    stats.tau = tau
    if params.certify and stats.status is Status.CERTIFIED:
        y = _close_duality_gap(y, b, stats, params, system)
    return y, stats


def _close_duality_gap(y, b, stats, params, system):
    """Extra stages until the recovered SOS bound is within epsilon of -b^T y."""
    while True:
        stats.lower_bound = sos_lower_bound(y, b, stats.tau_last, stats, system)
        upper = float(-(b @ y))
        if upper - stats.lower_bound <= params.epsilon * (1.0 + abs(upper)):
            break
        if stats.stages >= params.max_stages or stats.status is not Status.CERTIFIED:
            break
        y = continue_dual(y, b, stats, params, system)
    return y


def continue_dual(y, b, stats: DualStats, params: BarrierParams, system: SosSystem):
    """One further barrier stage beyond the nominal stopping weight."""
    b_unit = np.asarray(b, dtype=float) / stats.b_norm
    try:
        y = _center(y, stats.tau, b_unit, stats.eps_scaled, system, params, stats)
    except DegenerateKKTError:
        stats.status = Status.DEGENERATE
    stats.tau *= params.mu
    return y


# -- certificate and extraction --------------------------------------------------

def sos_lower_bound(y, b, tau, stats: DualStats, system: SosSystem):
    """Lower bound on min_q r(q)^T M r(q) from a primal point recovered at ``y``.

    The Gram matrix and multipliers come from the KKT solve at weight ``tau``;
    any residual in ``A x = b`` and any negative Gram eigenvalue are charged
    against gamma so the bound holds without exact centrality.
    """
    b = np.asarray(b, dtype=float)
    b_unit = b / stats.b_norm
    g, H, W = gradient_hessian(y, b_unit, tau, system)
    v, w = newton_direction(g, H, system.eq, system.eq_residual(y), return_multiplier=True)
    Bv = v[system.pairs]
    X = (W + W @ Bv @ W) / tau
    X = 0.5 * (X + X.T)
    x = np.concatenate([-w / tau, X.ravel()]) * stats.b_norm
    resid = b - system.a @ x
    gram_min = float(np.linalg.eigvalsh(X * stats.b_norm)[0])
    gamma = float(x[0])
    return gamma - float(np.abs(resid).sum()) - _GRAM_NORM_BOUND * max(0.0, -gram_min)


def extract_quaternion(y, basis=None, return_confidence=False):
    """Unit quaternion from the degree-2 moments of a dual point.

    ``y`` is normalized by its constant entry, so both moment vectors and
    dual points (constant entry -1) are accepted.  The dominant eigenvector
    of the 4x4 second-moment block is returned with q1 >= 0.
    """
    system = sos_system()
    basis = basis or system.basis
    y = np.asarray(y, dtype=float)
    c0 = y[basis.const]
    if not np.isfinite(y).all() or abs(c0) < 1e-12:
        raise ExtractionError("dual point has no usable constant moment")
    mom = y / c0
    E2 = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            e = [0, 0, 0, 0]
            e[i] += 1
            e[j] += 1
            E2[i, j] = mom[basis.pos(e)]
    evals, evecs = np.linalg.eigh(0.5 * (E2 + E2.T))
    if evals[-1] <= 1e-12:
        raise ExtractionError("second-moment block is numerically zero")
    q = evecs[:, -1] / np.linalg.norm(evecs[:, -1])
    if q[0] < 0 or (q[0] == 0 and q[np.flatnonzero(q)[0]] < 0):
        q = -q
    low_conf = bool(evals[-2] > 1e-3 * evals[-1])
    if return_confidence:
        return q, low_conf
    return q


def solve_pnp(corr: Correspondences, params: BarrierParams | None = None,
              system: SosSystem | None = None, record=False) -> SolveReport:
    params = params or BarrierParams()
    system = system or sos_system()
    coeffs = build_M(corr)
    b = build_b(coeffs, system.basis)
    if not np.any(b):
        # M = 0: every rotation is optimal
        R = np.eye(3)
        t = recover_translation(R, coeffs)
        c = cost(corr, Alignment(R, t))
        return SolveReport(Alignment(R, t), c, 0.0, c, 0, 0, Status.CERTIFIED, 0.0,
                           quaternion=np.array([1.0, 0, 0, 0]))
    y, stats = solve_dual(b, params, system=system, record=record)

    def evaluate(y):
        q, low = extract_quaternion(y, system.basis, return_confidence=True)
        q = polish_quaternion(q, coeffs.m)
        if q[0] < 0:
            q = -q
        R = r9_to_rotation(quat_to_r9(q))
        t = recover_translation(R, coeffs)
        achieved = cost(corr, Alignment(R, t))
        bound = sos_lower_bound(y, b, stats.tau_last, stats, system)
        return q, low, Alignment(R, t), achieved, bound

    q, low, align, achieved, bound = evaluate(y)
    tol_gap = lambda c: params.epsilon * (1.0 + abs(c))  # noqa: E731
    # Keep raising the weight until the recovered certificate closes the gap.
    while (stats.status is Status.CERTIFIED and achieved - bound > tol_gap(achieved)
           and stats.stages < params.max_stages):
        y = continue_dual(y, b, stats, params, system)
        q, low, align, achieved, bound = evaluate(y)

    status = stats.status
    if status is Status.CERTIFIED and (achieved - bound > tol_gap(achieved) or low):
        status = Status.UNCERTIFIED
    return SolveReport(
        alignment=align,
        achieved_cost=achieved,
        dual_bound=bound,
        certificate_gap=achieved - bound,
        newton_iterations=stats.newton_iterations,
        stages=stats.stages,
        status=status,
        dual_objective=float(-(b @ y)),
        low_confidence=low,
        quaternion=q,
        y=y,
        trace=stats.trace,
    )


def timed_solve(corr, params=None):
    t0 = time.perf_counter()
    rep = solve_pnp(corr, params)
    return rep, time.perf_counter() - t0
