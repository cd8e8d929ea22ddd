"""Geometry of the point-to-line PnP cost.

Rotations are handled as row-major 9-vectors ``r = R.ravel()`` and unit
quaternions are scalar-first ``(q1, q2, q3, q4)``.  Bearing lines carry an
anchor so that generalized (non-central) cameras use the same code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConfigurationError

UNIT_TOL = 1e-9
MAX_W_COND = 1e12


@dataclass(frozen=True)
class Correspondences:
    """Index-aligned model points and bearing lines.

    ``points`` is (n, 3), ``directions`` is (n, 3) with unit rows and
    ``anchors`` is (n, 3); anchors default to the camera center (origin).
    """

    points: np.ndarray
    directions: np.ndarray
    anchors: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.array(self.points, dtype=float, ndmin=2)
        v = np.array(self.directions, dtype=float, ndmin=2)
        a = np.zeros_like(p) if self.anchors is None else np.array(self.anchors, dtype=float, ndmin=2)
        if p.shape != v.shape or p.shape != a.shape or p.shape[1:] != (3,):
            raise ValueError(f"shape mismatch: points {p.shape}, directions {v.shape}, anchors {a.shape}")
        if len(p) < 3:
            raise ValueError(f"need at least 3 correspondences, got {len(p)}")
        if not (np.isfinite(p).all() and np.isfinite(v).all() and np.isfinite(a).all()):
            raise ValueError("non-finite correspondence data")
        if np.abs(np.linalg.norm(v, axis=1) - 1.0).max() > 1e-12:
            raise ValueError("bearing directions must be unit vectors")
        for name, arr in (("points", p), ("directions", v), ("anchors", a)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_lines(cls, points, directions, anchors=None, normalize=True):
        v = np.array(directions, dtype=float, ndmin=2)
        if normalize:
            v = v / np.linalg.norm(v, axis=1, keepdims=True)
        return cls(points, v, anchors)


@dataclass(frozen=True)
class Alignment:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def is_rotation(self, tol=1e-9):
        R = self.rotation
        return bool(np.abs(R.T @ R - np.eye(3)).max() <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


@dataclass(frozen=True)
class CoeffMatrix:
    """Quadratic cost ``r^T M r`` after eliminating translation.

    ``w_inv``, ``qp`` and ``qa`` give the optimal translation for a rotation
    ``r`` as ``w_inv @ (qa - qp @ r)``.
    """

    m: np.ndarray
    w_inv: np.ndarray
    qp: np.ndarray
    qa: np.ndarray


def quat_to_r9(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
    if abs(np.dot(q, q) - 1.0) > UNIT_TOL:
        raise ValueError(f"quaternion is not unit: |q|^2 = {np.dot(q, q)!r}")
    return quat_to_r9_unchecked(q)


def quat_to_r9_unchecked(q) -> np.ndarray:
    """Quadratic map q -> r(q); for non-unit q this equals |q|^2 R(q/|q|)."""
    q1, q2, q3, q4 = np.asarray(q, dtype=float)
    return np.array([
        q1 * q1 + q2 * q2 - q3 * q3 - q4 * q4,
        2 * q2 * q3 - 2 * q1 * q4,
        2 * q2 * q4 + 2 * q1 * q3,
        2 * q2 * q3 + 2 * q1 * q4,
        q1 * q1 - q2 * q2 + q3 * q3 - q4 * q4,
        2 * q3 * q4 - 2 * q1 * q2,
        2 * q2 * q4 - 2 * q1 * q3,
        2 * q3 * q4 + 2 * q1 * q2,
        q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4,
    ])


def r9_jacobian(q) -> np.ndarray:
    """9x4 derivative of the quadratic map q -> r(q)."""
    q1, q2, q3, q4 = np.asarray(q, dtype=float)
    return 2.0 * np.array([
        [q1, q2, -q3, -q4],
        [-q4, q3, q2, -q1],
        [q3, q4, q1, q2],
        [q4, q3, q2, q1],
        [q1, -q2, q3, -q4],
        [-q2, -q1, q4, q3],
        [-q3, q4, -q1, q2],
        [q2, q1, q4, q3],
        [q1, -q2, -q3, q4],
    ])


def quartic_value(q, m) -> float:
    r = quat_to_r9_unchecked(q)
    return float(r @ m @ r)


def _sphere_newton_parts(q, m, H_r):
    J = r9_jacobian(q)
    mr = m @ quat_to_r9_unchecked(q)
    grad = 2.0 * J.T @ mr
    hess = 2.0 * J.T @ m @ J + 2.0 * np.einsum("k,kij->ij", mr, H_r)
    # orthonormal tangent basis at q
    B = np.linalg.svd(q[None, :])[2][1:].T
    return B, B.T @ grad, B.T @ (hess - (q @ grad) * np.eye(4)) @ B


def polish_quaternion(q, m, max_iter=6):
    """Riemannian Newton on the unit sphere for r(q)^T M r(q).

    A step is kept when it lowers the quartic, or when the change is within
    rounding of the quartic's magnitude and the tangent gradient shrinks.
    """
    q = np.asarray(q, dtype=float) / np.linalg.norm(q)
    m = np.asarray(m, dtype=float)
    f = quartic_value(q, m)
    noise = 64.0 * np.finfo(float).eps * np.abs(m).sum()
    # r is quadratic, so the Hessians of its entries are constant
    H_r = np.array([r9_jacobian(e) for e in np.eye(4)]).transpose(1, 0, 2)
    B, gr, Hr = _sphere_newton_parts(q, m, H_r)
    for _ in range(max_iter):
        try:
            xi = np.linalg.solve(Hr, -gr)
        except np.linalg.LinAlgError:
            break
        cand = q + B @ xi
        cand /= np.linalg.norm(cand)
        fc = quartic_value(cand, m)
        Bc, gc, Hc = _sphere_newton_parts(cand, m, H_r)
        if not (fc < f or (fc <= f + noise and np.linalg.norm(gc) < np.linalg.norm(gr))):
            break
        q, f, B, gr, Hr = cand, fc, Bc, gc, Hc
    return q


def r9_to_rotation(r) -> np.ndarray:
    return np.asarray(r, dtype=float).reshape(3, 3).copy()


def rotation_to_quat(R) -> np.ndarray:
    """Inverse of the quaternion map, scalar part made nonnegative."""
    R = np.asarray(R, dtype=float)
    # Shepperd's method: pick the largest diagonal term to divide by.
    tr = np.trace(R)
    cands = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    k = int(np.argmax(cands))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def project_to_so3(X) -> np.ndarray:
    U, _, Vt = np.linalg.svd(np.asarray(X, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_angle(R1, R2) -> float:
    """Geodesic angle between two rotations, in radians."""
    A = np.asarray(R1, dtype=float).T @ np.asarray(R2, dtype=float)
    c = (np.trace(A) - 1.0) / 2.0
    # atan2 keeps full precision for tiny angles where arccos does not
    s = 0.5 * np.linalg.norm([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]])
    return float(np.arctan2(s, c))


def point_line_dist2(x, anchor, direction) -> float:
    d = np.asarray(x, dtype=float) - np.asarray(anchor, dtype=float)
    v = np.asarray(direction, dtype=float)
    return float(d @ d - (v @ d) ** 2)


def cost(corr: Correspondences, align: Alignment) -> float:
    """Sum of squared distances between transformed model points and their lines."""
    d = corr.points @ align.rotation.T + align.translation - corr.anchors
    along = np.einsum("ij,ij->i", d, corr.directions)
    per_pair = np.einsum("ij,ij->i", d, d) - along * along
    # fsum is correctly rounded, so the total does not depend on pair order
    return math.fsum(np.maximum(per_pair, 0.0))


def _cofactor_form(ell) -> np.ndarray:
    """Symmetric N with r^T N r = <ell, cof(R)>, which equals <ell, r> on SO(3)."""
    L = np.asarray(ell).reshape(3, 3)
    N = np.zeros((9, 9))
    for i in range(3):
        for j in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            w = 0.5 * L[i, j]
            a, b = 3 * i1 + j1, 3 * i2 + j2
            c, d = 3 * i1 + j2, 3 * i2 + j1
            N[a, b] += w
            N[b, a] += w
            N[c, d] -= w
            N[d, c] -= w
    return N


def build_M(corr: Correspondences) -> CoeffMatrix:
    p, v, a = corr.points, corr.directions, corr.anchors
    n = len(p)
    Q = np.eye(3)[None] - v[:, :, None] * v[:, None, :]
    W = Q.sum(axis=0)
    ev = np.linalg.eigvalsh(W)
    if ev[0] <= 0 or ev[-1] / ev[0] > MAX_W_COND:
        raise DegenerateConfigurationError(
            f"sum of line projectors is ill-conditioned (eigenvalues {ev}); bearings nearly parallel"
        )
    L = np.linalg.cholesky(W)
    Linv = np.linalg.inv(L)
    w_inv = Linv.T @ Linv

    # P_i maps r (row-major R) to R p_i.
    P = np.zeros((n, 3, 9))
    for k in range(3):
        P[:, k, 3 * k:3 * k + 3] = p
    qp = np.einsum("nij,njk->ik", Q, P)
    qa = np.einsum("nij,nj->i", Q, a)

    D = P - (w_inv @ qp)[None]
    d = (w_inv @ qa)[None] - a
    QD = np.einsum("nij,njk->nik", Q, D)
    m = np.einsum("nji,njk->ik", D, QD)
    lin = 2.0 * np.einsum("nj,njk->k", d, QD)
    const = float(np.einsum("ni,nij,nj->", d, Q, d))
    if np.any(lin != 0.0) or const != 0.0:
        # Off-center anchors: fold linear and constant terms into the quadratic
        # form using cof(R) = R and r^T r = 3 on SO(3).
        m = m + _cofactor_form(lin) + (const / 3.0) * np.eye(9)
    m = 0.5 * (m + m.T)
    return CoeffMatrix(m=m, w_inv=w_inv, qp=qp, qa=qa)


def recover_translation(R, coeffs: CoeffMatrix) -> np.ndarray:
    r = np.asarray(R, dtype=float).reshape(9)
    return coeffs.w_inv @ (coeffs.qa - coeffs.qp @ r)


def pixel_to_bearing(K, pixel) -> np.ndarray:
    """Unit direction of the ray through ``pixel`` for intrinsics ``K``."""
    K = np.asarray(K, dtype=float)
    if K.shape != (3, 3) or abs(np.linalg.det(K)) < 1e-300 or np.any(np.diag(K) <= 0):
        raise ValueError("intrinsics must be an invertible 3x3 matrix with positive diagonal")
    u, w = np.asarray(pixel, dtype=float)
    d = np.linalg.solve(K, np.array([u, w, 1.0]))
    return d / np.linalg.norm(d)


def pixels_to_bearings(K, pixels) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.shape != (3, 3) or abs(np.linalg.det(K)) < 1e-300 or np.any(np.diag(K) <= 0):
        raise ValueError("intrinsics must be an invertible 3x3 matrix with positive diagonal")
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    h = np.column_stack([px, np.ones(len(px))])
    d = np.linalg.solve(K, h.T).T
    return d / np.linalg.norm(d, axis=1, keepdims=True)
