"""Compare the numba and numpy kernel backends, then time full solves.

Run with ``python benchmarks/bench_kernels.py``.  Full-solve timings use the
backend selected at import time (set NPNP_DISABLE_NUMBA=1 for numpy).
"""
import time

import numpy as np

from npnp import _kernels
from npnp.bench import gen_scene, random_spec
from npnp.solver import _face_inverse, solve_pnp
from npnp.sos import sos_system

REPEAT = 200


def timeit(fn, *args, repeat=REPEAT):
    fn(*args)  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return np.median(times) * 1e6


def main():
    system = sos_system()
    y = np.array(system.analytic_center)
    W, _ = _face_inverse(y, system)
    b = np.random.default_rng(0).standard_normal(70)
    lam = np.sort(np.random.default_rng(1).uniform(-1, 1, 14))
    quats = np.random.default_rng(2).standard_normal((100_000, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    M = np.random.default_rng(3).standard_normal((9, 9))
    M = M @ M.T

    cases = {
        "grad_hess": lambda k: (k["grad_hess"], W, b, 1.0, system.pairs, system.onehot),
        "line_search_root": lambda k: (k["line_search_root"], lam, 0.3, 1.0 / lam[0], 1.0 / lam[-1], 1e-14),
        "quartic_costs (1e5)": lambda k: (k["quartic_costs"], quats, M),
    }
    print(f"{'kernel':<22}" + "".join(f"{name:>14}" for name in _kernels.BACKENDS) + "   [median us]")
    for label, make in cases.items():
        cells = []
        for name, k in _kernels.BACKENDS.items():
            fn, *args = make(k)
            cells.append(f"{timeit(fn, *args, repeat=20 if 'quartic' in label else REPEAT):14.1f}")
        print(f"{label:<22}" + "".join(cells))

    times = []
    for seed in range(50):
        corr = gen_scene(random_spec(12, noise=seed % 11, seed=seed)).correspondences()
        t0 = time.perf_counter()
        solve_pnp(corr)
        times.append(time.perf_counter() - t0)
    print(f"solve_pnp n=12 ({_kernels.BACKEND}): median {np.median(times[1:]) * 1e3:.1f} ms, "
          f"first call {times[0] * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
