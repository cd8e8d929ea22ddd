"""Acceptance criteria 1-10, each printing one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on.
"""
import time
import warnings

import numpy as np
import pytest
from scipy.stats import spearmanr

from npnp import bench
from npnp.baselines import OracleConfig, brute_force_pose
from npnp.geometry import cost, quat_to_r9, rotation_angle
from npnp.solver import BarrierParams, Status, barrier_value, gradient_hessian, solve_pnp
from npnp.sos import N_EQ, N_GRAM, N_MONO, N_X, build_A, build_b, enumerate_basis, monomial_values

from conftest import make_scene, random_feasible_y

EPS = 1e-6
SUITE_SIZE = 200
NEWTON_CAP = 60
# errors this small are floating-point rounding for both methods and compare as ties
ROUNDING_FLOOR = 1e-12


def report(capsys, n, title, ok, detail):
    with capsys.disabled():
        print(f"\nAC{n} {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def suite():
    """The standard suite: 200 scenes, n = 12, k = 0..10 cycled."""
    out = []
    for i in range(SUITE_SIZE):
        corr, data = make_scene(n=12, noise=i % 11, seed=1000 + i)
        t0 = time.perf_counter()
        rep = solve_pnp(corr, BarrierParams(epsilon=EPS))
        elapsed = time.perf_counter() - t0
        out.append(dict(corr=corr, data=data, report=rep, time=elapsed, k=i % 11))
    return out


@pytest.fixture(scope="module")
def sweep():
    return bench.run_benchmark(bench.BenchConfig(methods=("npnp", "dlt"), trials=10, seed=0))


def test_ac1_certificate_soundness(suite, capsys):
    certified = [s for s in suite if s["report"].status is Status.CERTIFIED]
    bad = []
    for s in certified:
        r = s["report"]
        c = r.achieved_cost
        if not (r.dual_bound <= c <= r.dual_bound + EPS * (1 + abs(c))):
            bad.append((s["k"], c, r.dual_bound))
    total = sum(s["time"] for s in suite)
    worst = max(s["report"].certificate_gap / (1 + abs(s["report"].achieved_cost)) for s in certified)
    ok = not bad and total < 60.0 and len(certified) > 0
    report(capsys, 1, "certificate soundness",
           ok, f"{len(certified)}/{len(suite)} certified, {len(bad)} violations, "
               f"max relative gap {worst:.2e}, total {total:.1f}s")


def test_ac2_exact_recovery(capsys):
    rot, trans = [], []
    for i in range(100):
        corr, data = make_scene(n=12, noise=0.0, seed=2000 + i)
        r = solve_pnp(corr, BarrierParams(epsilon=EPS))
        rot.append(rotation_angle(r.alignment.rotation, data.ground_truth.rotation))
        trans.append(np.linalg.norm(r.alignment.translation - data.ground_truth.translation))
    ok = max(rot) <= 1e-4 and max(trans) <= 1e-4
    report(capsys, 2, "exact recovery at zero noise", ok,
           f"max rotation error {max(rot):.2e} rad, max translation error {max(trans):.2e} m over 100 scenes")


def test_ac3_oracle_sandwich(capsys):
    lower_viol = upper_viol = 0
    worst = -np.inf
    for i in range(50):
        corr, _ = make_scene(n=12, noise=1 + i % 10, seed=3000 + i)
        r = solve_pnp(corr, BarrierParams(epsilon=EPS))
        oracle_cost = cost(corr, brute_force_pose(corr, OracleConfig(seed=i)))
        lower_viol += oracle_cost < r.dual_bound - 1e-7
        upper_viol += r.achieved_cost > oracle_cost + 1e-6
        worst = max(worst, r.achieved_cost - oracle_cost)
    ok = lower_viol == 0 and upper_viol == 0
    report(capsys, 3, "oracle sandwich", ok,
           f"{lower_viol} lower-bound and {upper_viol} upper violations; max(npnp - oracle) = {worst:.2e}")


def test_ac4_sos_layer_identity(capsys):
    rng = np.random.default_rng(4)
    basis = enumerate_basis()
    A = build_A(basis)
    worst_a = worst_b = 0.0
    for _ in range(1000):
        x = rng.standard_normal(N_X)
        q = rng.standard_normal(4)
        m = monomial_values(q, basis.deg2)
        direct = x[0] + (x[1:N_EQ] @ m) * (q @ q - 1) + m @ x[N_EQ:].reshape(N_GRAM, N_GRAM) @ m
        worst_a = max(worst_a, abs((A @ x) @ monomial_values(q, basis.deg4) - direct) / abs(direct))
    for _ in range(1000):
        M = rng.standard_normal((9, 9))
        M = M + M.T
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        r = quat_to_r9(q)
        direct = r @ M @ r
        worst_b = max(worst_b, abs(build_b(M, basis) @ monomial_values(q, basis.deg4) - direct) / abs(direct))
    col0 = A[:, 0]
    trivial = (np.count_nonzero(col0) == 1 and col0[basis.const] == 1.0
               and not np.any(A @ np.zeros(N_X)) and not np.any(build_b(np.zeros((9, 9)), basis)))
    ok = worst_a <= 1e-9 and worst_b <= 1e-9 and trivial
    report(capsys, 4, "SOS layer identity", ok,
           f"max relative error A {worst_a:.1e}, b {worst_b:.1e}; trivial checks {'ok' if trivial else 'failed'}")


def test_ac5_calculus(system, capsys):
    rng = np.random.default_rng(5)
    h = 1e-6
    worst_g = worst_h = 0.0
    for _ in range(20):
        y = random_feasible_y(rng, system)
        b = rng.standard_normal(N_MONO)
        tau = rng.uniform(0.01, 10.0)
        g, H, _ = gradient_hessian(y, b, tau, system)
        g_fd = np.empty(N_MONO)
        H_fd = np.empty((N_MONO, N_MONO))
        for k in range(N_MONO):
            e = np.zeros(N_MONO)
            e[k] = h
            g_fd[k] = (barrier_value(y + e, b, tau, system) - barrier_value(y - e, b, tau, system)) / (2 * h)
            H_fd[:, k] = (gradient_hessian(y + e, b, tau, system)[0]
                          - gradient_hessian(y - e, b, tau, system)[0]) / (2 * h)
        worst_g = max(worst_g, np.linalg.norm(g_fd - g) / np.linalg.norm(g))
        worst_h = max(worst_h, np.linalg.norm(H_fd - H) / np.linalg.norm(H))
    ok = worst_g <= 1e-5 and worst_h <= 1e-4
    report(capsys, 5, "gradient/Hessian vs finite differences", ok,
           f"max relative error g {worst_g:.1e}, H {worst_h:.1e} at 20 points")


def test_ac6_iteration_budget(suite, capsys):
    its = np.array([s["report"].newton_iterations for s in suite])
    capped = sum(s["report"].status is Status.MAX_ITERATIONS or s["report"].newton_iterations >= NEWTON_CAP
                 for s in suite)
    med = float(np.median(its))
    ok = 10 <= med <= 40 and capped == 0
    report(capsys, 6, "iteration budget", ok,
           f"median {med:.0f}, range [{its.min()}, {its.max()}], cap {NEWTON_CAP} hit {capped} times")


def test_ac7_interior_point_invariants(suite, capsys):
    steps = 0
    min_eig = np.inf
    min_gain = np.inf
    max_resid = 0.0
    for i in range(SUITE_SIZE):
        corr = suite[i]["corr"]
        r = solve_pnp(corr, BarrierParams(epsilon=EPS), record=True)
        for st in r.trace:
            steps += 1
            min_eig = min(min_eig, st["min_eig_face"])
            min_gain = min(min_gain, st["gain"])
            max_resid = max(max_resid, st["eq_residual"])
    ok = min_eig > 0 and min_gain >= 0 and max_resid <= 1e-10
    report(capsys, 7, "interior-point invariants", ok,
           f"{steps} steps; min eigenvalue of the slack on its face {min_eig:.2e}, "
           f"min per-step gain of f_tau {min_gain:.2e}, max equality residual {max_resid:.1e}")


@pytest.mark.xfail(strict=True, reason="every dual-feasible slack annihilates the coefficient vector of "
                                       "|q|^2 - 1, so the full 15x15 slack is singular; the barrier and the "
                                       "positivity check live on its 14-dimensional face")
def test_ac7_full_slack_is_positive_definite(system):
    corr, _ = make_scene(noise=3.0, seed=1)
    r = solve_pnp(corr, record=True)
    assert min(st["min_eig_slack"] for st in r.trace) > 0
    assert np.linalg.eigvalsh(system.slack(system.analytic_center))[0] > 0


def _means(rows, method, field):
    return [r[field] for r in rows if r["method"] == method and r["trial"] == "mean"]


def test_ac8_noise_sweep_shape(sweep, capsys):
    ks = list(range(11))
    fields = ("trans_err", "ang_err_a", "ang_err_b", "ang_err_g")
    rhos = {f: spearmanr(ks, _means(sweep, "npnp", f))[0] for f in fields}
    worse = []
    for f in fields:
        for k, a, b in zip(ks, _means(sweep, "npnp", f), _means(sweep, "dlt", f)):
            if a > b and not (a <= ROUNDING_FLOOR and b <= ROUNDING_FLOOR):
                worse.append((f, k, a, b))
    ok = all(r > 0.8 for r in rhos.values()) and not worse
    rho_txt = ", ".join(f"{f} {r:.3f}" for f, r in rhos.items())
    k0 = ", ".join(f"{f} {_means(sweep, 'npnp', f)[0]:.1e}/{_means(sweep, 'dlt', f)[0]:.1e}" for f in fields)
    report(capsys, 8, "noise-sweep shape", ok,
           f"Spearman {rho_txt}; npnp worse than DLT at {len(worse)} (field, k) cells; "
           f"k=0 npnp/dlt {k0}")


def test_ac9_determinism(sweep, tmp_path, capsys):
    again = bench.run_benchmark(bench.BenchConfig(methods=("npnp", "dlt"), trials=10, seed=0))
    bench.write_csv(sweep, tmp_path / "a.csv")
    bench.write_csv(again, tmp_path / "b.csv")
    strip = lambda rows: [{k: v for k, v in r.items() if k not in bench.TIMING_COLUMNS} for r in rows]  # noqa: E731
    a, b = strip(bench.read_csv(tmp_path / "a.csv")), strip(bench.read_csv(tmp_path / "b.csv"))
    ok = a == b and len(a) == 2 * 11 * 10 + 22
    report(capsys, 9, "determinism", ok, f"{len(a)} rows, identical excluding timing: {a == b}")


def test_ac10_speed(suite, capsys):
    med = float(np.median([s["time"] for s in suite])) * 1e3
    if med > 50.0:
        warnings.warn(f"median solve time {med:.1f} ms exceeds the 50 ms target", stacklevel=1)
    ok = med <= 200.0
    verdict = "within target" if med <= 50.0 else "above 50 ms target (soft)"
    report(capsys, 10, "desk-scale speed", ok, f"median solve_pnp {med:.1f} ms at n = 12, {verdict}")
