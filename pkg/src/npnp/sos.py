"""Constant data of the level-1 SOS program over unit quaternions.

The decision vector ``x`` (241 entries) holds gamma, the 15 coefficients of
the multiplier lambda(q) and the row-stacked 15x15 Gram matrix; ``A x = b``
matches coefficients of all 70 monomials of degree <= 4.
"""
from __future__ import annotations

import argparse
import functools
import itertools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

N_VARS = 4
N_GRAM = 15
N_MONO = 70
N_EQ = 1 + N_GRAM
N_X = N_EQ + N_GRAM * N_GRAM

CENTER_ASSET = "analytic_center.txt"
_QUADRATIC_DEC2 = 1e-10


def _exponents(max_degree):
    out = []
    for deg in range(max_degree + 1):
        block = [e for e in itertools.product(range(deg + 1), repeat=N_VARS) if sum(e) == deg]
        # lex on (q1, q2, q3, q4): higher power of q1 first
        block.sort(reverse=True)
        out.extend(block)
    return out


@dataclass(frozen=True)
class MonomialBasis:
    deg2: tuple
    deg4: tuple
    index: dict

    @property
    def const(self):
        return self.index[(0, 0, 0, 0)]

    def pos(self, exponent):
        return self.index[tuple(exponent)]


@functools.lru_cache(maxsize=None)
def enumerate_basis() -> MonomialBasis:
    deg2 = tuple(_exponents(2))
    deg4 = tuple(_exponents(4))
    return MonomialBasis(deg2=deg2, deg4=deg4, index={e: i for i, e in enumerate(deg4)})


def monomial_values(q, exponents) -> np.ndarray:
    """q**alpha for every exponent; ``q`` may be (4,) or (N, 4).

    Powers are built by repeated multiplication, so q and -q give bitwise
    equal even-degree values.
    """
    q = np.asarray(q, dtype=float)
    E = np.asarray(exponents)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    powers = np.ones((E.max() + 1,) + q.shape)
    for k in range(1, E.max() + 1):
        powers[k] = powers[k - 1] * q
    cols = np.arange(q.shape[1])
    out = powers[E[:, 0], :, 0]
    for j in cols[1:]:
        out = out * powers[E[:, j], :, j]
    out = out.T
    return out[0] if single else out


def pair_index(basis: MonomialBasis) -> np.ndarray:
    """15x15 table: deg4 position of the product m_i * m_j."""
    P = np.empty((N_GRAM, N_GRAM), dtype=np.int64)
    for i, ei in enumerate(basis.deg2):
        for j, ej in enumerate(basis.deg2):
            P[i, j] = basis.index[tuple(a + b for a, b in zip(ei, ej))]
    return P


def build_A(basis: MonomialBasis) -> np.ndarray:
    A = np.zeros((N_MONO, N_X))
    A[basis.const, 0] = 1.0
    for j, ej in enumerate(basis.deg2):
        # lambda_j * m_j(q) * (|q|^2 - 1)
        col = 1 + j
        for k in range(N_VARS):
            e = list(ej)
            e[k] += 2
            A[basis.index[tuple(e)], col] += 1.0
        A[basis.index[ej], col] -= 1.0
    P = pair_index(basis)
    for i in range(N_GRAM):
        for j in range(N_GRAM):
            A[P[i, j], N_EQ + N_GRAM * i + j] += 1.0
    return A


def build_c() -> np.ndarray:
    c = np.zeros(N_X)
    c[0] = -1.0
    return c


def _r9_quadratic_forms(basis: MonomialBasis) -> np.ndarray:
    """9x10 coefficients of r(q) over the degree-2 monomials deg2[5:]."""
    quad = basis.deg2[5:]
    pos = {e: i for i, e in enumerate(quad)}

    def sq(a):
        e = [0, 0, 0, 0]
        e[a] = 2
        return pos[tuple(e)]

    def cross(a, b):
        e = [0, 0, 0, 0]
        e[a] += 1
        e[b] += 1
        return pos[tuple(e)]

    F = np.zeros((9, len(quad)))
    signs = [(1, 1, -1, -1), (1, -1, 1, -1), (1, -1, -1, 1)]
    for row, s in zip((0, 4, 8), signs):
        for a in range(4):
            F[row, sq(a)] = s[a]
    # off-diagonal entries: (row, [(coef, a, b), ...])
    off = {
        1: [(2, 1, 2), (-2, 0, 3)],
        2: [(2, 1, 3), (2, 0, 2)],
        3: [(2, 1, 2), (2, 0, 3)],
        5: [(2, 2, 3), (-2, 0, 1)],
        6: [(2, 1, 3), (-2, 0, 2)],
        7: [(2, 2, 3), (2, 0, 1)],
    }
    for row, terms in off.items():
        for coef, a, b in terms:
            F[row, cross(a, b)] += coef
    return F


def build_b(m, basis: MonomialBasis) -> np.ndarray:
    """Coefficients of the quartic r(q)^T M r(q) in the deg4 basis."""
    M = np.asarray(getattr(m, "m", m), dtype=float)
    F = _r9_quadratic_forms(basis)
    G = F.T @ M @ F
    P = pair_index(basis)[5:, 5:]
    return np.bincount(P.ravel(), weights=G.ravel(), minlength=N_MONO)


def sphere_kernel_vector(basis: MonomialBasis) -> np.ndarray:
    """Coefficients of |q|^2 - 1 in the Gram basis.

    Every dual-feasible slack matrix annihilates this vector, so the barrier
    is taken over its orthogonal complement.
    """
    u = np.zeros(N_GRAM)
    u[0] = -1.0
    for k in range(N_VARS):
        e = [0, 0, 0, 0]
        e[k] = 2
        u[basis.deg2.index(tuple(e))] = 1.0
    return u


@dataclass(frozen=True)
class SosSystem:
    basis: MonomialBasis
    a: np.ndarray
    c: np.ndarray
    pairs: np.ndarray
    onehot: np.ndarray
    eq: np.ndarray
    face: np.ndarray
    analytic_center: np.ndarray

    def slack(self, y) -> np.ndarray:
        """mat((c - A^T y)[16:]); the Gram block of c is zero."""
        return -np.asarray(y)[self.pairs]

    def eq_residual(self, y) -> np.ndarray:
        return self.c[:N_EQ] - self.eq.T @ y


def _face_basis(basis):
    u = sphere_kernel_vector(basis)
    u = u / np.linalg.norm(u)
    # Householder reflector sends u to e_0; its remaining columns span u-perp.
    w = u.copy()
    w[0] += np.sign(u[0]) if u[0] != 0 else 1.0
    H = np.eye(N_GRAM) - 2.0 * np.outer(w, w) / (w @ w)
    return np.ascontiguousarray(H[:, 1:])


def _assemble(center) -> SosSystem:
    basis = enumerate_basis()
    a = build_A(basis)
    pairs = pair_index(basis)
    onehot = np.zeros((N_GRAM * N_GRAM, N_MONO))
    onehot[np.arange(N_GRAM * N_GRAM), pairs.ravel()] = 1.0
    for arr in (a, pairs, onehot):
        arr.setflags(write=False)
    return SosSystem(
        basis=basis,
        a=a,
        c=build_c(),
        pairs=pairs,
        onehot=onehot,
        eq=np.ascontiguousarray(a[:, :N_EQ]),
        face=_face_basis(basis),
        analytic_center=center,
    )


def load_analytic_center(path=None) -> np.ndarray:
    if path is None:
        text = resources.files("npnp.data").joinpath(CENTER_ASSET).read_text(encoding="ascii")
    else:
        text = Path(path).read_text(encoding="ascii")
    y = np.array([float(tok) for tok in text.split()])
    if y.shape != (N_MONO,):
        raise ValueError(f"analytic center asset must hold {N_MONO} values, found {y.size}")
    return y


def write_analytic_center(y, path) -> None:
    lines = [f"{float(v):.17g}" for v in y]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


@functools.lru_cache(maxsize=None)
def sos_system() -> SosSystem:
    """Shared read-only SOS data with the persisted analytic center."""
    center = load_analytic_center()
    center.setflags(write=False)
    return _assemble(center)


def phase_one_start(basis: MonomialBasis, n_points=32, seed=0) -> np.ndarray:
    """Strictly feasible dual point from an averaged set of point masses.

    Moments of a measure on the unit sphere satisfy the equality rows; the
    sign flip matches the constant entry c[0] = -1.
    """
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n_points, N_VARS))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    mom = monomial_values(q, basis.deg4).mean(axis=0)
    return -mom


def compute_analytic_center(tol=1e-24, max_iter=100):
    """Maximize log det of the slack over the dual feasible set (zero objective weight)."""
    from . import solver

    system = _assemble(center=None)
    y = phase_one_start(system.basis)
    zero_b = np.zeros(N_MONO)
    prev = np.inf
    for _ in range(max_iter):
        g, H, _ = solver.gradient_hessian(y, zero_b, 0.0, system)
        v = solver.newton_direction(g, H, system.eq, system.eq_residual(y))
        dec2 = solver.newton_decrement2(v, H)
        if dec2 < tol or not np.any(v) or (dec2 < _QUADRATIC_DEC2 and dec2 > 0.5 * prev):
            break
        prev = dec2
        # once quadratic convergence sets in the exact step is 1 and the
        # line search itself is dominated by rounding
        step = 1.0 if dec2 < _QUADRATIC_DEC2 else solver.exact_line_search(y, v, zero_b, 0.0, system)
        y = y + step * v
    else:
        raise RuntimeError("analytic center iteration did not converge")
    # project onto the equality set to remove rounding drift
    r = system.eq_residual(y)
    y = y + system.eq @ np.linalg.solve(system.eq.T @ system.eq, r)
    return y


def main(argv=None):
    parser = argparse.ArgumentParser(description="Regenerate the analytic-center asset.")
    parser.add_argument("--out", default=None, help="defaults to the packaged asset path")
    args = parser.parse_args(argv)
    out = args.out or str(Path(__file__).with_name("data") / CENTER_ASSET)
    y = compute_analytic_center()
    write_analytic_center(y, out)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
