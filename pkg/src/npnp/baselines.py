"""Reference pose estimators: a linear DLT solver and a sampling oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsufficientDataError
from .geometry import (
    Alignment,
    Correspondences,
    build_M,
    project_to_so3,
    quartic_value,
    quat_to_r9_unchecked,
    r9_jacobian,
    r9_to_rotation,
    recover_translation,
)

DLT_MIN_POINTS = 6
_RANK_TOL = 1e-10


def _skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def dlt_pose(corr: Correspondences) -> Alignment:
    """Linear pose from the constraints ``v_i x (R p_i + t - a_i) = 0``.

    The 3x4 matrix ``[R | t]`` is the least-squares null vector of the
    stacked system (points are centered and scaled first), its left block is
    projected onto SO(3) and the translation rescaled to match.
    """
    p, v, a = corr.points, corr.directions, corr.anchors
    n = len(p)
    if n < DLT_MIN_POINTS:
        raise InsufficientDataError(f"DLT needs at least {DLT_MIN_POINTS} correspondences, got {n}")
    center = p.mean(axis=0)
    pc = p - center
    sv = np.linalg.svd(pc, compute_uv=False)
    if sv[-1] <= 1e-9 * sv[0]:
        raise InsufficientDataError("model points are coplanar or collinear")
    scale = np.sqrt((pc ** 2).sum(axis=1).mean())
    ph = np.column_stack([pc / scale, np.ones(n)])

    # unknown x = row-major [A | b], with A ~ kappa*scale*R and b ~ kappa*(R c + t);
    # off-center anchors add a 13th column that pins kappa = 1
    central = not np.any(a)
    rows = np.zeros((3 * n, 12 if central else 13))
    for i in range(n):
        S = _skew(v[i])
        for r in range(3):
            rows[3 * i:3 * i + 3, 4 * r:4 * r + 4] = S[:, r:r + 1] * ph[i][None, :]
        if not central:
            rows[3 * i:3 * i + 3, 12] = -S @ a[i]
    _, s, Vt = np.linalg.svd(rows)
    if s[-2] <= _RANK_TOL * s[0]:
        raise InsufficientDataError("DLT system is rank deficient")
    x = Vt[-1]
    if not central:
        if abs(x[12]) <= _RANK_TOL * np.abs(x).max():
            raise InsufficientDataError("DLT solution does not fix the anchor scale")
        x = x / x[12]
    P = x[:12].reshape(3, 4)
    A, b = P[:, :3], P[:, 3]
    sign = 1.0 if np.linalg.det(A) > 0 else -1.0
    R = project_to_so3(sign * A)
    kappa = sign * np.linalg.svd(A, compute_uv=False).mean() / scale
    t = b / kappa - R @ center
    return Alignment(R, t)


@dataclass(frozen=True)
class OracleConfig:
    n_samples: int = 200_000
    refine_iters: int = 50
    seed: int = 0
    n_keep: int = 8
    chunk: int = 50_000

    def __post_init__(self):
        if self.n_samples < 1000:
            raise ValueError("n_samples must be at least 1000")
        if self.refine_iters < 0 or self.n_keep < 1 or self.chunk < 1:
            raise ValueError("refine_iters, n_keep and chunk must be positive")


def _refine(q, M, iters):
    """Projected gradient descent on the unit sphere with Barzilai-Borwein steps."""
    f = quartic_value(q, M)
    q_prev = g_prev = None
    for _ in range(iters):
        g = r9_jacobian(q).T @ (2.0 * M @ quat_to_r9_unchecked(q))
        g = g - (g @ q) * q
        if not np.any(g):
            break
        if g_prev is None:
            step = 1.0 / max(np.linalg.norm(2.0 * M, 2) * 4.0, 1e-300)
        else:
            dq, dg = q - q_prev, g - g_prev
            denom = dq @ dg
            step = (dq @ dq) / denom if denom > 0 else 1e-3
        while True:
            cand = q - step * g
            cand /= np.linalg.norm(cand)
            fc = quartic_value(cand, M)
            if fc <= f or step < 1e-20:
                break
            step *= 0.5
        if fc > f:
            break
        q_prev, g_prev = q, g
        q, f = cand, fc
    return q, f


def brute_force_pose(corr: Correspondences, cfg: OracleConfig | None = None) -> Alignment:
    """Best of uniformly sampled quaternions, locally refined; an upper-bound oracle."""
    cfg = cfg or OracleConfig()
    coeffs = build_M(corr)
    M = np.ascontiguousarray(coeffs.m)
    rng = np.random.default_rng(cfg.seed)
    best_q = np.empty((0, 4))
    best_f = np.empty(0)
    done = 0
    while done < cfg.n_samples:
        # chunks draw the same stream as one large draw, so a larger n_samples
        # always evaluates a superset of the samples
        m = min(cfg.chunk, cfg.n_samples - done)
        q = rng.standard_normal((m, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        f = _kernels.quartic_costs(q, M)
        cand_q = np.vstack([best_q, q])
        cand_f = np.concatenate([best_f, f])
        keep = np.argsort(cand_f, kind="stable")[:cfg.n_keep]
        best_q, best_f = cand_q[keep], cand_f[keep]
        done += m
    results = [_refine(q, M, cfg.refine_iters) for q in best_q]
    q, _ = min(results, key=lambda qf: qf[1])
    R = project_to_so3(r9_to_rotation(quat_to_r9_unchecked(q)))
    return Alignment(R, recover_translation(R, coeffs))
