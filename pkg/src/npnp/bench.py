"""Synthetic scenes, dataset files and the noise-sweep benchmark."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import OracleConfig, brute_force_pose, dlt_pose
from .errors import NPnPError, SceneGenerationError
from .geometry import Alignment, Correspondences, cost, pixels_to_bearings, quat_to_r9, r9_to_rotation
from .solver import BarrierParams, solve_pnp

DEFAULT_K = np.array([[800.0, 0.0, 320.0], [0.0, 800.0, 240.0], [0.0, 0.0, 1.0]])
DEFAULT_WORKSPACE = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
MIN_DEPTH = 0.1
MAX_RESAMPLE = 100
GIMBAL_TOL = 1e-9
FORMAT_VERSION = 1

CSV_COLUMNS = ("method", "k", "trial", "trans_err", "ang_err_a", "ang_err_b", "ang_err_g",
               "cost", "gap", "newton_iters", "time_s", "status")
TIMING_COLUMNS = ("time_s",)
CUMULATIVE_COLUMNS = ("method", "frame", "k", "trial", "cum_trans_err", "cum_ang_err")
METHODS = ("npnp", "dlt", "oracle")


@dataclass(frozen=True)
class SceneSpec:
    n_points: int
    camera_pose: Alignment
    intrinsics: np.ndarray = field(default_factory=lambda: DEFAULT_K.copy())
    workspace: tuple = DEFAULT_WORKSPACE
    pixel_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError("n_points must be at least 3")
        if not self.pixel_noise_std >= 0:
            raise ValueError("pixel_noise_std must be nonnegative")
        lo, hi = (np.asarray(w, dtype=float) for w in self.workspace)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise ValueError("workspace must be a nondegenerate axis-aligned box")


@dataclass(frozen=True)
class Dataset:
    spec: SceneSpec
    points: np.ndarray
    pixels: np.ndarray
    ground_truth: Alignment
    intrinsics: np.ndarray

    def correspondences(self) -> Correspondences:
        return Correspondences(self.points, pixels_to_bearings(self.intrinsics, self.pixels))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return to_dict(self) == to_dict(other)


def random_pose(rng, depth=(5.0, 7.0), lateral=0.5) -> Alignment:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    R = r9_to_rotation(quat_to_r9(q))
    t = np.array([rng.uniform(-lateral, lateral), rng.uniform(-lateral, lateral), rng.uniform(*depth)])
    return Alignment(R, t)


def random_spec(n_points, noise=0.0, seed=0, **kwargs) -> SceneSpec:
    """Scene spec with a camera pose drawn from ``seed``, looking at the workspace."""
    pose_seq = np.random.SeedSequence([seed, 1])
    pose = random_pose(np.random.default_rng(pose_seq))
    return SceneSpec(n_points=n_points, camera_pose=pose, pixel_noise_std=float(noise), seed=seed, **kwargs)


def project(K, align: Alignment, points) -> tuple[np.ndarray, np.ndarray]:
    """Pixels and depths of model points seen from ``align``."""
    pc = np.asarray(points) @ align.rotation.T + align.translation
    h = pc @ np.asarray(K).T
    return h[:, :2] / h[:, 2:], pc[:, 2]


def gen_scene(spec: SceneSpec) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 2]))
    lo, hi = (np.asarray(w, dtype=float) for w in spec.workspace)
    K = np.asarray(spec.intrinsics, dtype=float)
    pose = spec.camera_pose
    points = rng.uniform(lo, hi, size=(spec.n_points, 3))
    for _ in range(MAX_RESAMPLE):
        _, depth = project(K, pose, points)
        behind = depth <= MIN_DEPTH
        if not behind.any():
            break
        points[behind] = rng.uniform(lo, hi, size=(int(behind.sum()), 3))
    else:
        raise SceneGenerationError(f"could not place points in front of the camera after {MAX_RESAMPLE} draws")
    pixels, _ = project(K, pose, points)
    if spec.pixel_noise_std > 0:
        pixels = pixels + rng.normal(0.0, spec.pixel_noise_std, size=pixels.shape)
    return Dataset(spec=spec, points=points, pixels=pixels, ground_truth=pose, intrinsics=K.copy())


# -- dataset files ---------------------------------------------------------------

def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def to_dict(d: Dataset) -> dict:
    s = d.spec
    return {
        "format": FORMAT_VERSION,
        "spec": {
            "n_points": int(s.n_points),
            "workspace": [_floats(s.workspace[0]), _floats(s.workspace[1])],
            "pixel_noise_std": float(s.pixel_noise_std),
            "seed": int(s.seed),
            "camera_rotation": _floats(s.camera_pose.rotation),
            "camera_translation": _floats(s.camera_pose.translation),
            "intrinsics": _floats(s.intrinsics),
        },
        "intrinsics": _floats(d.intrinsics),
        "points": [_floats(p) for p in d.points],
        "pixels": [_floats(p) for p in d.pixels],
        "rotation": _floats(d.ground_truth.rotation),
        "translation": _floats(d.ground_truth.translation),
    }


def from_dict(obj: dict) -> Dataset:
    if obj.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format {obj.get('format')!r}")
    s = obj["spec"]
    spec = SceneSpec(
        n_points=int(s["n_points"]),
        camera_pose=Alignment(s["camera_rotation"], s["camera_translation"]),
        intrinsics=np.array(s["intrinsics"], dtype=float).reshape(3, 3),
        workspace=(tuple(s["workspace"][0]), tuple(s["workspace"][1])),
        pixel_noise_std=float(s["pixel_noise_std"]),
        seed=int(s["seed"]),
    )
    points = np.array(obj["points"], dtype=float).reshape(-1, 3)
    pixels = np.array(obj["pixels"], dtype=float).reshape(-1, 2)
    if len(points) != len(pixels):
        raise ValueError("points and pixels differ in length")
    return Dataset(
        spec=spec,
        points=points,
        pixels=pixels,
        ground_truth=Alignment(obj["rotation"], obj["translation"]),
        intrinsics=np.array(obj["intrinsics"], dtype=float).reshape(3, 3),
    )


def dumps(d: Dataset) -> str:
    # repr-based float output makes the round trip exact
    return json.dumps(to_dict(d), indent=1, sort_keys=True) + "\n"


def loads(text: str) -> Dataset:
    return from_dict(json.loads(text))


def save_dataset(d: Dataset, path) -> None:
    Path(path).write_text(dumps(d), encoding="utf-8")


def load_dataset(path) -> Dataset:
    return loads(Path(path).read_text(encoding="utf-8"))


# -- metrics ---------------------------------------------------------------------

def euler_zyx(R) -> np.ndarray:
    """(yaw, pitch, roll) with R = Rz(yaw) Ry(pitch) Rx(roll)."""
    R = np.asarray(R, dtype=float)
    yaw = math.atan2(R[1, 0], R[0, 0])
    pitch = math.atan2(-R[2, 0], math.hypot(R[2, 1], R[2, 2]))
    roll = math.atan2(R[2, 1], R[2, 2])
    return np.array([yaw, pitch, roll])


def is_gimbal_locked(R, tol=GIMBAL_TOL) -> bool:
    return abs(abs(euler_zyx(R)[1]) - math.pi / 2) <= tol


def euler_errors(R, R_star) -> np.ndarray:
    """Absolute ZYX Euler-angle differences wrapped to [0, pi]."""
    d = euler_zyx(R) - euler_zyx(R_star)
    return np.abs((d + np.pi) % (2 * np.pi) - np.pi)


# -- benchmark -------------------------------------------------------------------

@dataclass(frozen=True)
class BenchConfig:
    methods: tuple = ("npnp", "dlt")
    noise_levels: tuple = tuple(range(11))
    trials: int = 10
    seed: int = 0
    n_points: int = 12
    params: BarrierParams = field(default_factory=BarrierParams)
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.trials < 1:
            raise ValueError("trials must be positive")


def scene_seed(seed, k, trial) -> int:
    """Seed of the (k, trial) cell; independent of the method list."""
    return int(np.random.SeedSequence([seed, int(k), int(trial)]).generate_state(1)[0])


def cell_dataset(cfg: BenchConfig, k, trial) -> Dataset:
    return gen_scene(random_spec(cfg.n_points, noise=k, seed=scene_seed(cfg.seed, k, trial)))


def run_method(method, corr, params: BarrierParams, oracle: OracleConfig):
    """Returns (alignment, gap, newton_iters, status, seconds); times the solver only."""
    t0 = time.perf_counter()
    if method == "npnp":
        rep = solve_pnp(corr, params)
        dt = time.perf_counter() - t0
        return rep.alignment, rep.certificate_gap, rep.newton_iterations, rep.status.value, dt
    if method == "dlt":
        align = dlt_pose(corr)
    elif method == "oracle":
        align = brute_force_pose(corr, oracle)
    else:
        raise ValueError(f"unknown method {method!r}")
    return align, float("nan"), 0, "ok", time.perf_counter() - t0


def _row(method, k, trial, data: Dataset, corr, cfg):
    try:
        align, gap, iters, status, dt = run_method(method, corr, cfg.params, cfg.oracle)
    except NPnPError as exc:
        nan = float("nan")
        return dict(method=method, k=k, trial=trial, trans_err=nan, ang_err_a=nan, ang_err_b=nan,
                    ang_err_g=nan, cost=nan, gap=nan, newton_iters=0, time_s=nan,
                    status=type(exc).__name__, alignment=None)
    gt = data.ground_truth
    errs = euler_errors(align.rotation, gt.rotation)
    if is_gimbal_locked(align.rotation) or is_gimbal_locked(gt.rotation):
        status += "+gimbal"
    return dict(
        method=method, k=k, trial=trial,
        trans_err=float(np.linalg.norm(align.translation - gt.translation)),
        ang_err_a=float(errs[0]), ang_err_b=float(errs[1]), ang_err_g=float(errs[2]),
        cost=cost(corr, align), gap=float(gap), newton_iters=int(iters), time_s=float(dt),
        status=status, alignment=align,
    )


_MEAN_FIELDS = ("trans_err", "ang_err_a", "ang_err_b", "ang_err_g", "cost", "gap", "newton_iters", "time_s")


def _average(method, k, rows):
    out = dict(method=method, k=k, trial="mean")
    for f in _MEAN_FIELDS:
        vals = np.array([r[f] for r in rows], dtype=float)
        vals = vals[np.isfinite(vals)]
        out[f] = float(vals.mean()) if vals.size else float("nan")
    n_fail = sum(1 for r in rows if not np.isfinite(r["cost"]))
    out["status"] = f"failed={n_fail}"
    return out


def cumulative_series(rows):
    """Running sums of translation and total angular error over each method's runs."""
    out = []
    acc = {}
    frames = {}
    for r in rows:
        if r["trial"] == "mean":
            continue
        m = r["method"]
        te, ae = acc.get(m, (0.0, 0.0))
        ang = r["ang_err_a"] + r["ang_err_b"] + r["ang_err_g"]
        if np.isfinite(r["trans_err"]):
            te += r["trans_err"]
        if np.isfinite(ang):
            ae += ang
        acc[m] = (te, ae)
        frames[m] = frames.get(m, -1) + 1
        out.append(dict(method=m, frame=frames[m], k=r["k"], trial=r["trial"], cum_trans_err=te, cum_ang_err=ae))
    return out


def run_benchmark(cfg: BenchConfig):
    """Per-run rows followed by per-(method, k) mean rows.

    Run rows also carry the estimated ``alignment``; it is not a CSV column.
    """
    runs = []
    means = []
    for k in cfg.noise_levels:
        per_method = {m: [] for m in cfg.methods}
        for trial in range(cfg.trials):
            data = cell_dataset(cfg, k, trial)
            corr = data.correspondences()
            for m in cfg.methods:
                row = _row(m, k, trial, data, corr, cfg)
                per_method[m].append(row)
                runs.append(row)
        means.extend(_average(m, k, per_method[m]) for m in cfg.methods)
    return runs + means


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, path, columns=CSV_COLUMNS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cumulative_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + "_cumulative" + (p.suffix or ".csv"))


def write_benchmark(rows, path) -> tuple[Path, Path]:
    write_csv(rows, path)
    cum = cumulative_path(path)
    write_csv(cumulative_series(rows), cum, CUMULATIVE_COLUMNS)
    return Path(path), cum
