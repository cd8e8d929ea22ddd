"""Command-line entry point: ``npnp gen | solve | bench``.

Failures print one JSON line ``{"error": <type>, "message": <text>}`` to
stderr and exit with status 1.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench
from .baselines import OracleConfig
from .geometry import cost, rotation_angle
from .solver import BarrierParams


def _cmd_gen(args):
    spec = bench.random_spec(args.n, noise=args.noise, seed=args.seed)
    data = bench.gen_scene(spec)
    bench.save_dataset(data, args.out)
    print(json.dumps({"out": args.out, "n": args.n, "noise": args.noise, "seed": args.seed}))


def _cmd_solve(args):
    data = bench.load_dataset(args.input)
    corr = data.correspondences()
    params = BarrierParams(epsilon=args.eps, delta=args.delta)
    oracle = OracleConfig(seed=args.seed)
    align, gap, iters, status, dt = bench.run_method(args.method, corr, params, oracle)
    gt = data.ground_truth
    errs = bench.euler_errors(align.rotation, gt.rotation)
    report = {
        "method": args.method,
        "status": status,
        "rotation": align.rotation.ravel().tolist(),
        "translation": align.translation.tolist(),
        "cost": cost(corr, align),
        "gap": None if np.isnan(gap) else gap,
        "newton_iters": iters,
        "time_s": dt,
        "trans_err": float(np.linalg.norm(align.translation - gt.translation)),
        "rot_err": rotation_angle(align.rotation, gt.rotation),
        "euler_err": errs.tolist(),
    }
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
    print(json.dumps(report))


def _cmd_bench(args):
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.noise_max < args.noise_min:
        raise ValueError("noise-max must not be below noise-min")
    cfg = bench.BenchConfig(
        methods=methods,
        noise_levels=tuple(range(args.noise_min, args.noise_max + 1)),
        trials=args.trials,
        seed=args.seed,
        n_points=args.n,
        params=BarrierParams(epsilon=args.eps),
        oracle=OracleConfig(n_samples=args.oracle_samples, seed=args.seed),
    )
    rows = bench.run_benchmark(cfg)
    main_csv, cum_csv = bench.write_benchmark(rows, args.out)
    print(json.dumps({"out": str(main_csv), "cumulative": str(cum_csv), "rows": len(rows)}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="npnp", description="Certified PnP solver and benchmark tools.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic scene file")
    g.add_argument("--n", type=int, required=True, help="number of correspondences")
    g.add_argument("--noise", type=float, default=0.0, help="pixel noise std")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    s = sub.add_parser("solve", help="estimate the pose of a scene file")
    s.add_argument("--input", required=True)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--delta", type=float, default=1e4)
    s.add_argument("--method", choices=bench.METHODS, default="npnp")
    s.add_argument("--report", default=None, help="write the JSON report here")
    s.add_argument("--seed", type=int, default=0, help="oracle sampling seed")
    s.set_defaults(func=_cmd_solve)

    b = sub.add_parser("bench", help="run the noise sweep and write CSV")
    b.add_argument("--methods", default="npnp,dlt", help="comma-separated subset of npnp,dlt,oracle")
    b.add_argument("--noise-min", type=int, default=0)
    b.add_argument("--noise-max", type=int, default=10)
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--n", type=int, default=12, help="correspondences per scene")
    b.add_argument("--eps", type=float, default=1e-6)
    b.add_argument("--oracle-samples", type=int, default=200_000)
    b.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
