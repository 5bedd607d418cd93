"""evroad: simulate, label, train, map and evaluate evidential road grids.

Every subcommand accepts ``--config FILE`` (JSON object whose keys are flag
names); values found there override the command line, which overrides the
built-in defaults. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .evidential import vacuous_array
from .geometry import Pose2D, RigidMotion2D
from .glr import TrainConfig, f1_score, optimize_alpha_on_dataset, train_glr
from .grid import STAGES, GridConfig, RoadMapper
from .labels import LabelParams, LocalizationFix, label_scan
from .metrics import UndefinedCorrelationError, cross_correlation, ground_truth_grid, map_score, overall_error
from .odometry import CtrvState, run_filter, write_measurements, read_measurements
from .scan import SweepConfig, motion_compensate
from .sim import (FAMILIES, FEATURE_NAMES, OdoNoise, SensorSpec, WorldConfig, generate_world, perfect_masses,
                  point_features, ScanTruth, simulate_sequence)

log = logging.getLogger("evroad")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# dataset helpers


def _frame_name(prefix: str, k: int, ext: str) -> str:
    return f"{prefix}_{k:04d}.{ext}"


def _scan_frames(dataset: Path, limit: int | None) -> list[int]:
    frames = sorted(int(p.stem.split("_")[1]) for p in (dataset / "scans").glob("scan_*.csv"))
    return frames[:limit] if limit else frames


def _load_truth(dataset: Path, k: int) -> ScanTruth:
    return ScanTruth(np.loadtxt(dataset / "scans" / _frame_name("truth", k, "csv"), dtype=np.int64, skiprows=1, ndmin=1))


def _require_dir(p: Path, what: str) -> Path:
    if not p.is_dir():
        raise UsageError(f"{what} directory not found: {p}")
    return p


def _require_file(p: Path, what: str) -> Path:
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(a) -> int:
    if a.world not in FAMILIES:
        raise UsageError(f"unknown world family {a.world!r}; choose from {', '.join(FAMILIES)}")
    if a.duration <= 0:
        raise UsageError("--duration must be positive")
    try:
        wcfg = WorldConfig(family=a.world, n_static=a.n_static, n_vehicles=a.n_vehicles, ego_speed=a.ego_speed)
        spec = SensorSpec(range_noise=a.range_noise, dropout=a.dropout)
        noise = OdoNoise(a.speed_std, a.heading_std, a.yaw_rate_std)
    except ValueError as e:
        raise UsageError(str(e)) from e
    if a.gnss_std < 0:
        raise UsageError("--gnss-std must be non-negative")

    world = generate_world(a.seed, wcfg)
    seq = simulate_sequence(world, a.duration, spec, noise, seed=a.seed)
    out = Path(a.out)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    io.write_geojson(out / "map.geojson", world.vmap)
    io.write_world(out / "world.json", world)
    write_measurements(out / "odometry.csv", seq.measurements)

    rng = np.random.default_rng([a.seed, 7])
    n = len(seq) if not a.frames else min(a.frames, len(seq))
    rows = []
    for k in range(n):
        scan = seq.scan(k)
        io.write_points_csv(out / "scans" / _frame_name("scan", k, "csv"), scan.points)
        np.savetxt(out / "scans" / _frame_name("truth", k, "csv"), scan.truth.label, fmt="%d", header="label", comments="")
        p = seq.poses[k]
        fx, fy = (p.x + rng.normal(0, a.gnss_std), p.y + rng.normal(0, a.gnss_std)) if a.gnss_std > 0 else (p.x, p.y)
        rows.append([float(seq.times[k]), p.x, p.y, p.heading, float(seq.speeds[k]), float(fx), float(fy), p.heading,
                     float(a.gnss_std), float(a.gnss_std)])
    io.write_table(out / "poses.csv", io.POSE_COLUMNS, rows)
    _write_config(out / "config.json", a)
    print(f"wrote {n} scans of world '{a.world}' to {out}")
    return 0


def cmd_label(a) -> int:
    ds = _require_dir(Path(a.dataset), "dataset")
    if a.gamma < 0:
        raise UsageError("--gamma must be non-negative")
    vmap = io.read_geojson(_require_file(ds / "map.geojson", "map"))
    poses = io.read_table(_require_file(ds / "poses.csv", "pose table"))
    out = Path(a.out) if a.out else ds / "labels"
    out.mkdir(parents=True, exist_ok=True)
    params = LabelParams(gamma=a.gamma, max_pose_std=a.max_pose_std, spacing=a.spacing)
    travelled, last_xy, kept = math.inf, None, 0
    for k in _scan_frames(ds, a.frames):
        xy = np.array([poses["x"][k], poses["y"][k]])
        if last_xy is not None:
            travelled += float(np.linalg.norm(xy - last_xy))
        last_xy = xy
        fix = LocalizationFix(Pose2D(poses["fix_x"][k], poses["fix_y"][k], poses["fix_heading"][k]),
                              poses["sigma_n"][k], poses["sigma_e"][k])
        pts = io.read_points_csv(ds / "scans" / _frame_name("scan", k, "csv"))
        truth = _load_truth(ds, k)
        labels = label_scan(pts, truth.is_ground, fix, vmap, params, v_s=poses["speed"][k], travelled_since_last=travelled)
        if not labels.variance_ok:
            log.warning("frame %d skipped: localization std above %.2f m", k, a.max_pose_std)
            continue
        if not labels.spacing_ok:
            log.info("frame %d skipped: only %.2f m since last labelled scan", k, travelled)
            continue
        io.write_labels_csv(out / _frame_name("labels", k, "csv"), labels)
        travelled, kept = 0.0, kept + 1
    print(f"labelled {kept} scans into {out}")
    return 0


def _labelled_points(ds: Path, label_dir: Path, frames, rng, max_points):
    xs, ys, truths = [], [], []
    for k in frames:
        pts = io.read_points_csv(ds / "scans" / _frame_name("scan", k, "csv"))
        p_road, _ = io.read_labels_csv(label_dir / _frame_name("labels", k, "csv"))
        truth = _load_truth(ds, k)
        v = pts.valid
        xs.append(point_features(pts.subset(v)))
        ys.append(p_road[v])
        truths.append(truth.is_road[v])
    x, y, t = np.concatenate(xs), np.concatenate(ys), np.concatenate(truths)
    if max_points and len(x) > max_points:
        sel = np.sort(rng.choice(len(x), max_points, replace=False))
        x, y, t = x[sel], y[sel], t[sel]
    return x, y, t


def _label_frames(label_dir: Path) -> list[int]:
    return sorted(int(p.stem.split("_")[1]) for p in label_dir.glob("labels_*.csv"))


def cmd_train(a) -> int:
    ds = _require_dir(Path(a.dataset), "dataset")
    label_dir = _require_dir(Path(a.labels) if a.labels else ds / "labels", "labels")
    frames = _label_frames(label_dir)
    if len(frames) < 2:
        raise UsageError("need labels for at least two scans (one held out)")
    if not 0 < a.holdout < 1:
        raise UsageError("--holdout must lie in (0, 1)")
    n_test = max(1, int(round(len(frames) * a.holdout)))
    train_f, test_f = frames[:-n_test], frames[-n_test:]
    rng = np.random.default_rng(a.seed)
    x, y, _ = _labelled_points(ds, label_dir, train_f, rng, a.max_points)
    cfg = TrainConfig(hidden=a.hidden, l2=a.l2, learning_rate=a.lr, max_epochs=a.epochs, seed=a.seed)
    res = train_glr(x, y, cfg, FEATURE_NAMES)
    xt, _, tt = _labelled_points(ds, label_dir, test_f, rng, a.max_points)
    f1 = f1_score(res.classifier.predict_prob(xt) > 0.5, tt)
    out = Path(a.out) if a.out else ds / "glr_params.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_glr_params(out, res.classifier)
    report = {"train_frames": train_f, "validation_frames": test_f, "train_points": int(len(x)),
              "validation_points": int(len(xt)), "validation_f1": f1, "epochs": len(res.loss_history),
              "final_loss": res.loss_history[-1]}
    out.with_suffix(".report.json").write_text(json.dumps(report, indent=1))
    print(f"validation F1 = {f1:.4f}; parameters written to {out}")
    return 0


def cmd_postprocess_alpha(a) -> int:
    clf = io.read_glr_params(_require_file(Path(a.params), "parameter file"))
    out = Path(a.out) if a.out else Path(a.params)
    if a.dataset == "none":
        head = clf.head
    else:
        ds = _require_dir(Path(a.data), "data") if a.data else None
        if ds is None:
            raise UsageError("--data is required unless --dataset none")
        rng = np.random.default_rng(a.seed)
        if a.dataset == "train":
            label_dir = _require_dir(Path(a.labels) if a.labels else ds / "labels", "labels")
            x, _, _ = _labelled_points(ds, label_dir, _label_frames(label_dir), rng, a.max_points)
        else:
            xs = []
            for k in _scan_frames(ds, a.frames):
                pts = io.read_points_csv(ds / "scans" / _frame_name("scan", k, "csv"))
                xs.append(point_features(pts.subset(pts.valid)))
            x = np.concatenate(xs)
            if a.max_points and len(x) > a.max_points:
                x = x[np.sort(rng.choice(len(x), a.max_points, replace=False))]
        head = optimize_alpha_on_dataset(clf.head, clf.features(x))
    io.write_glr_params(out, clf.with_head(head))
    print(f"alphas from '{a.dataset}' written to {out}")
    return 0


def _odometry_deltas(ds: Path, times: np.ndarray, poses, mode: str):
    if mode == "truth":
        return [None] + [RigidMotion2D.between(poses[k - 1], poses[k]) for k in range(1, len(poses))]
    ms = read_measurements(_require_file(ds / "odometry.csv", "odometry log"))
    sh = [m for m in ms if m.kind == "speed_heading"]
    if not sh:
        raise UsageError("odometry log has no speed/heading measurement")
    cov = np.diag([1e-4, 1e-4, sh[0].variances[1], sh[0].variances[0], 1e-2])
    init = CtrvState(0.0, 0.0, sh[0].values[1], sh[0].values[0], 0.0, cov, min(float(times[0]), sh[0].timestamp))
    states = run_filter(init, ms, times)
    return [None] + [RigidMotion2D.between(states[k - 1].pose, states[k].pose) for k in range(1, len(states))]


def cmd_map(a) -> int:
    ds = _require_dir(Path(a.dataset), "dataset")
    try:
        gcfg = GridConfig(cell=a.grid_cell, nu=a.nu, xi=a.xi)
    except ValueError as e:
        raise UsageError(str(e)) from e
    clf = None
    if a.classifier == "glr":
        clf = io.read_glr_params(_require_file(Path(a.params) if a.params else ds / "glr_params.txt", "parameter file"))
    frames = _scan_frames(ds, a.frames)
    if not frames:
        raise UsageError(f"no scans in {ds / 'scans'}")
    tab = io.read_table(_require_file(ds / "poses.csv", "pose table"))
    poses = [Pose2D(tab["x"][k], tab["y"][k], tab["heading"][k]) for k in frames]
    times = tab["t"][frames]
    deltas = _odometry_deltas(ds, times, poses, a.odometry)

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    mapper = RoadMapper(gcfg)
    runtime = []
    sweep = SweepConfig()
    for i, k in enumerate(frames):
        pts = io.read_points_csv(ds / "scans" / _frame_name("scan", k, "csv"))
        if clf is None:
            masses = perfect_masses(pts, _load_truth(ds, k))
        else:
            masses = vacuous_array((len(pts),))
            masses[pts.valid] = clf.masses(point_features(pts.subset(pts.valid)))
        pts = motion_compensate(pts, tab["speed"][k], sweep)
        res = mapper.step(pts, masses, deltas[i], poses[i], float(times[i]))
        runtime.append([k] + [round(res.timings_ms[s], 3) for s in STAGES] + [round(res.timings_ms["total"], 3)])
        if i % a.snapshot_every == 0 or i == len(frames) - 1:
            io.write_grid_csv(out / _frame_name("grid", k, "csv"), res.road)
            io.write_pgm(out / _frame_name("grid", k, "pgm"), res.road)
            io.write_grid_meta(out / _frame_name("grid", k, "meta.txt"), res.road, k)
            io.write_clusters_csv(out / _frame_name("clusters", k, "csv"), res.clusters)
        log.info("frame %d: %d clusters, %.1f ms", k, res.n_clusters, res.timings_ms["total"])
    io.write_table(out / "runtime.csv", ("frame",) + STAGES + ("total",), runtime)
    totals = np.array([r[-1] for r in runtime])
    print(f"mapped {len(frames)} scans; pipeline median {np.median(totals):.1f} ms, max {totals.max():.1f} ms")
    return 0


def cmd_eval(a) -> int:
    ds = _require_dir(Path(a.dataset), "dataset")
    grids = _require_dir(Path(a.grids), "grid")
    vmap = io.read_geojson(_require_file(ds / "map.geojson", "map"))
    metas = sorted(grids.glob("grid_*.meta.txt"))
    if a.frames:
        metas = metas[:a.frames]
    if not metas:
        raise UsageError(f"no grid snapshots in {grids}")
    rows = []
    for mp in metas:
        meta = io.read_grid_meta(mp)
        cfg = io.meta_config(meta)
        grid = io.read_grid_csv(mp.with_name(mp.name.replace(".meta.txt", ".csv")), cfg)
        gt = ground_truth_grid(vmap, io.meta_pose(meta), cfg)
        mask = grid.count > 0
        if not mask.any():
            log.warning("%s has no observed cell; skipped", mp.name)
            continue
        try:
            cc = cross_correlation(grid, gt, mask)
        except UndefinedCorrelationError:
            cc = math.nan
        rows.append((int(meta["frame"]), map_score(grid, gt, mask), overall_error(grid, gt, mask), cc))
    out = Path(a.out) if a.out else grids / "metrics.csv"
    io.write_metrics_csv(out, rows)
    arr = np.array([r[1:] for r in rows])
    print(f"{len(rows)} frames: map_score {np.nanmean(arr[:, 0]):.4f}, overall_error {np.nanmean(arr[:, 1]):.4f}, "
          f"cross_correlation {np.nanmean(arr[:, 2]):.4f} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _write_config(path: Path, a) -> None:
    cfg = {k: v for k, v in vars(a).items() if k not in ("func", "config", "verbose", "command")}
    path.write_text(json.dumps(cfg, indent=1, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evroad", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="JSON file whose values override the flags")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--frames", type=int, default=None, help="process at most this many scans")

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(s, "dataset directory to create")
    s.add_argument("--world", choices=FAMILIES, default="straight")
    s.add_argument("--duration", type=float, default=12.0, help="seconds of driving (10 scans per second)")
    s.add_argument("--n-static", type=int, default=8)
    s.add_argument("--n-vehicles", type=int, default=1)
    s.add_argument("--ego-speed", type=float, default=30 / 3.6, help="m/s")
    s.add_argument("--range-noise", type=float, default=0.02)
    s.add_argument("--dropout", type=float, default=0.0)
    s.add_argument("--gnss-std", type=float, default=0.1, help="std of the labelling position fix (m)")
    s.add_argument("--speed-std", type=float, default=0.05)
    s.add_argument("--heading-std", type=float, default=0.002)
    s.add_argument("--yaw-rate-std", type=float, default=0.002)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("label", help="soft-label ground points from the road map")
    common(s, "label directory (default DATASET/labels)")
    s.add_argument("--dataset", required=True)
    s.add_argument("--gamma", type=float, default=0.10)
    s.add_argument("--max-pose-std", type=float, default=0.5)
    s.add_argument("--spacing", type=float, default=10.0, help="metres driven between labelled scans")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("train", help="train the logistic point classifier")
    common(s, "parameter file (default DATASET/glr_params.txt)")
    s.add_argument("--dataset", required=True)
    s.add_argument("--labels")
    s.add_argument("--hidden", type=int, default=16)
    s.add_argument("--epochs", type=int, default=3000)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--l2", type=float, default=1e-4)
    s.add_argument("--holdout", type=float, default=0.25, help="fraction of labelled scans kept for validation")
    s.add_argument("--max-points", type=int, default=20000)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("postprocess-alpha", help="re-spread the classifier bias to maximize ignorance")
    common(s, "updated parameter file (default: overwrite --params)")
    s.add_argument("--params", required=True)
    s.add_argument("--dataset", choices=("train", "unlabeled", "none"), default="none",
                   help="which points supply the feature means")
    s.add_argument("--data", help="dataset directory providing those points")
    s.add_argument("--labels")
    s.add_argument("--max-points", type=int, default=50000)
    s.set_defaults(func=cmd_postprocess_alpha)

    s = sub.add_parser("map", help="run the road-grid pipeline over a dataset")
    common(s, "output directory for grids, clusters and runtime log")
    s.add_argument("--dataset", required=True)
    s.add_argument("--classifier", choices=("perfect", "glr"), default="perfect")
    s.add_argument("--params")
    s.add_argument("--odometry", choices=("ekf", "truth"), default="ekf")
    s.add_argument("--grid-cell", type=float, default=0.2)
    s.add_argument("--nu", type=float, default=4.0)
    s.add_argument("--xi", type=float, default=1.5)
    s.add_argument("--snapshot-every", type=int, default=1)
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("eval", help="score grid snapshots against the road map")
    common(s, "metrics CSV (default GRIDS/metrics.csv)")
    s.add_argument("--dataset", required=True)
    s.add_argument("--grids", required=True)
    s.set_defaults(func=cmd_eval)
    return p


def _apply_config(parser, a) -> None:
    if not getattr(a, "config", None):
        return
    try:
        doc = json.loads(Path(a.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {a.config}: {e}") from e
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    for key, value in doc.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest == "command" and value == a.command:
            continue
        if dest in ("func", "command") or not hasattr(a, dest):
            raise UsageError(f"unknown config key {key!r} for '{a.command}'")
        setattr(a, dest, value)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _apply_config(parser, a)
        if getattr(a, "snapshot_every", 1) < 1 or (a.frames is not None and a.frames < 1):
            raise UsageError("--frames and --snapshot-every must be positive")
        return a.func(a)
    except UsageError as e:
        print(f"evroad {a.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - batch tool reports and exits
        print(f"evroad {a.command}: failed: {e}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
