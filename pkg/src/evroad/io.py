"""File formats: point clouds, range images, maps, worlds, classifiers, grids, metrics.

Range image binary layout: one ASCII header line with eight space-separated
fields ``rows cols channels endianness dtype az_step layout version`` followed
by ``rows * cols * channels`` raw values, row-major with channels fastest.

Classifier parameter files are plain text, one array per line:
``name,rows,cols,v0,v1,...`` (row-major); ``features,<name>,<name>...`` holds
input feature names. Values are written with ``repr`` so they round-trip.
"""
from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path as FsPath

import numpy as np

from .evidential import vacuous_array
from .geometry import Polygon, Pose2D, VectorMap
from .glr import GlrClassifier, LinearHead
from .grid import EvidentialGrid, GridConfig
from .scan import CHANNELS, AZIMUTH_STEP_DEG, PointCloud, RangeImage

POINT_COLUMNS = ("x", "y", "z", "range", "azimuth_deg", "elevation_deg", "ring", "intensity", "valid")
RANGE_IMAGE_VERSION = "1"


# ---------------------------------------------------------------------------
# points and range images


def write_points_csv(path, pts: PointCloud) -> None:
    cols = [getattr(pts, c) for c in POINT_COLUMNS]
    data = np.column_stack([c.astype(float) for c in cols])
    fmt = ["%.17g"] * 6 + ["%d", "%.17g", "%d"]
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=",".join(POINT_COLUMNS), comments="")


def read_points_csv(path) -> PointCloud:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return PointCloud.empty()
    cols = {c: data[:, i] for i, c in enumerate(POINT_COLUMNS)}
    cols["ring"] = cols["ring"].astype(np.int64)
    cols["valid"] = cols["valid"] != 0
    return PointCloud(**cols)


def write_range_image(path, img: RangeImage) -> None:
    rows, cols, ch = img.data.shape
    endian = "little" if sys.byteorder == "little" else "big"
    header = f"{rows} {cols} {ch} {endian} float32 {AZIMUTH_STEP_DEG!r} ring-azimuth-channel {RANGE_IMAGE_VERSION}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(img.data, dtype=np.float32).tobytes())


def read_range_image(path) -> RangeImage:
    with open(path, "rb") as fh:
        fields = fh.readline().decode("ascii").split()
        if len(fields) != 8:
            raise ValueError("range image header must have 8 fields")
        rows, cols, ch = (int(v) for v in fields[:3])
        if ch != len(CHANNELS):
            raise ValueError(f"expected {len(CHANNELS)} channels, got {ch}")
        dtype = np.dtype(fields[4]).newbyteorder("<" if fields[3] == "little" else ">")
        raw = np.frombuffer(fh.read(), dtype=dtype)
    if raw.size != rows * cols * ch:
        raise ValueError("range image payload size does not match header")
    return RangeImage(raw.reshape(rows, cols, ch).astype(float))


# ---------------------------------------------------------------------------
# maps and worlds


def _ring_coords(ring: np.ndarray) -> list:
    pts = [[float(x), float(y)] for x, y in ring]
    return pts + [pts[0]]


def write_geojson(path, vmap: VectorMap) -> None:
    feats = [
        {"type": "Feature", "properties": {"kind": "road"},
         "geometry": {"type": "Polygon", "coordinates": [_ring_coords(r) for r in p.rings()]}}
        for p in vmap.polygons
    ]
    doc = {"type": "FeatureCollection", "properties": {"origin": list(vmap.origin), "units": "m"}, "features": feats}
    FsPath(path).write_text(json.dumps(doc, indent=1))


def read_geojson(path) -> VectorMap:
    doc = json.loads(FsPath(path).read_text())
    polys = []
    for f in doc.get("features", []):
        g = f["geometry"]
        parts = [g["coordinates"]] if g["type"] == "Polygon" else g["coordinates"]
        for rings in parts:
            polys.append(Polygon(np.asarray(rings[0]), [np.asarray(h) for h in rings[1:]]))
    origin = tuple(doc.get("properties", {}).get("origin", (0.0, 0.0)))
    return VectorMap(polys, origin)


def _path_dict(path) -> dict:
    s = path.start
    return {"start": [s.x, s.y, s.heading], "segments": [[g.length, g.curvature] for g in path.segments]}


def _traj_dict(tr) -> dict:
    return {"path": _path_dict(tr.path), "speed": tr.speed, "s0": tr.s0}


def write_world(path, world) -> None:
    from .sim import Box

    obstacles = []
    for o in world.obstacles:
        if isinstance(o, Box):
            obstacles.append({"type": "box", "cx": o.cx, "cy": o.cy, "yaw": o.yaw,
                              "length": o.length, "width": o.width, "height": o.height})
        else:
            obstacles.append({"type": "cylinder", "cx": o.cx, "cy": o.cy, "radius": o.radius, "height": o.height})
    doc = {
        "family": world.family,
        "sensor_height": world.sensor_height,
        "obstacles": obstacles,
        "vehicles": [{"trajectory": _traj_dict(v.trajectory), "length": v.length, "width": v.width,
                      "height": v.height} for v in world.vehicles],
        "ego": _traj_dict(world.ego) if world.ego is not None else None,
    }
    FsPath(path).write_text(json.dumps(doc, indent=1))


def read_world(world_path, map_path):
    from .sim import Box, Cylinder, Path, Segment, Trajectory, Vehicle, World

    def traj(d):
        p = d["path"]
        return Trajectory(Path(Pose2D(*p["start"]), [Segment(*g) for g in p["segments"]]), d["speed"], d["s0"])

    doc = json.loads(FsPath(world_path).read_text())
    vmap = read_geojson(map_path)
    obstacles = []
    for o in doc["obstacles"]:
        kind = o.pop("type")
        obstacles.append(Box(**o) if kind == "box" else Cylinder(**o))
    vehicles = [Vehicle(traj(v["trajectory"]), v["length"], v["width"], v["height"]) for v in doc["vehicles"]]
    ego = traj(doc["ego"]) if doc.get("ego") else None
    return World(doc["family"], vmap, vmap.to_shapely(), obstacles, vehicles, ego, doc["sensor_height"])


# ---------------------------------------------------------------------------
# masses and classifiers


def write_masses_csv(path, masses: np.ndarray) -> None:
    np.savetxt(path, np.asarray(masses, dtype=float).reshape(-1, 3), fmt="%.17g", delimiter=",",
               header="m_R,m_notR,m_omega", comments="")


def read_masses_csv(path) -> np.ndarray:
    m = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if m.size == 0:
        return vacuous_array((0,))
    if m.shape[1] != 3:
        raise ValueError("mass file needs columns m_R,m_notR,m_omega")
    if np.any(m < -1e-9) or np.any(np.abs(m.sum(axis=1) - 1) > 1e-9):
        raise ValueError("mass rows must be non-negative and sum to 1")
    return m


_ARRAYS = ("input_mean", "input_std", "hidden_weights", "hidden_bias", "norm_mean", "norm_var")


def write_glr_params(path, clf: GlrClassifier) -> None:
    def line(name, a):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return ",".join([name, str(a.shape[0]), str(a.shape[1])] + [repr(float(v)) for v in a.ravel()])

    lines = ["features," + ",".join(clf.feature_names)]
    lines += [line(n, getattr(clf, n)) for n in _ARRAYS]
    lines += [line("betas", clf.head.betas), line("beta0", [clf.head.beta0]),
              line("alphas", clf.head.alphas), line("eps", [clf.eps])]
    FsPath(path).write_text("\n".join(lines) + "\n")


def read_glr_params(path) -> GlrClassifier:
    arrays, names = {}, None
    for raw in FsPath(path).read_text().splitlines():
        if not raw.strip():
            continue
        parts = raw.split(",")
        if parts[0] == "features":
            names = tuple(parts[1:])
            continue
        rows, cols = int(parts[1]), int(parts[2])
        vals = np.array([float(v) for v in parts[3:]])
        if vals.size != rows * cols:
            raise ValueError(f"parameter {parts[0]!r} has {vals.size} values, expected {rows * cols}")
        arrays[parts[0]] = vals.reshape(rows, cols)
    missing = set(_ARRAYS + ("betas", "beta0", "alphas", "eps")) - set(arrays)
    if missing or names is None:
        raise ValueError(f"parameter file incomplete: missing {sorted(missing) or ['features']}")
    head = LinearHead(arrays["betas"].ravel(), float(arrays["beta0"][0, 0]), arrays["alphas"].ravel())
    return GlrClassifier(
        names, arrays["input_mean"].ravel(), arrays["input_std"].ravel(), arrays["hidden_weights"],
        arrays["hidden_bias"].ravel(), arrays["norm_mean"].ravel(), arrays["norm_var"].ravel(), head,
        float(arrays["eps"][0, 0]),
    )


# ---------------------------------------------------------------------------
# grids


def write_grid_csv(path, grid: EvidentialGrid) -> None:
    """Observed or non-vacuous cells only; every omitted cell is vacuous with count 0."""
    keep = (grid.count > 0) | (grid.mass[..., 2] < 1.0)
    r, c = np.nonzero(keep)
    data = np.column_stack([r, c, grid.mass[r, c], grid.count[r, c]])
    np.savetxt(path, data, fmt=["%d", "%d", "%.17g", "%.17g", "%.17g", "%d"], delimiter=",",
               header="row,col,m_R,m_notR,m_omega,count", comments="")


def read_grid_csv(path, cfg: GridConfig = GridConfig()) -> EvidentialGrid:
    g = EvidentialGrid.vacuous(cfg)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size:
        r, c = data[:, 0].astype(int), data[:, 1].astype(int)
        g.mass[r, c] = data[:, 2:5]
        g.count[r, c] = data[:, 5].astype(np.int64)
    return g


def write_pgm(path, grid: EvidentialGrid) -> None:
    """m(R) as 8-bit grey; forward (+x) at the top, left (+y) on the left."""
    img = np.round(np.clip(grid.mass[..., 0], 0, 1) * 255).astype(np.uint8)[::-1, ::-1]
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w)


def write_clusters_csv(path, clusters: np.ndarray) -> None:
    np.savetxt(path, clusters, fmt="%d", delimiter=",")


def read_clusters_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)


def write_grid_meta(path, grid: EvidentialGrid, frame: int | None = None) -> None:
    p = grid.pose or Pose2D(0.0, 0.0, 0.0)
    cfg = grid.cfg
    items = {
        "frame": "" if frame is None else frame,
        "timestamp": repr(float(grid.timestamp)),
        "pose_x": repr(float(p.x)), "pose_y": repr(float(p.y)), "pose_heading": repr(float(p.heading)),
        "cell": repr(float(cfg.cell)), "length": repr(float(cfg.length)), "width": repr(float(cfg.width)),
        "rows": cfg.shape[0], "cols": cfg.shape[1],
        "axes": "row=+x forward, col=+y left, sensor at grid centre",
    }
    FsPath(path).write_text("".join(f"{k}={v}\n" for k, v in items.items()))


def read_grid_meta(path) -> dict:
    out = {}
    for line in FsPath(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def meta_pose(meta: dict) -> Pose2D:
    return Pose2D(float(meta["pose_x"]), float(meta["pose_y"]), float(meta["pose_heading"]))


def meta_config(meta: dict, nu: float = 4.0, xi: float = 1.5) -> GridConfig:
    return GridConfig(float(meta["length"]), float(meta["width"]), float(meta["cell"]), nu=nu, xi=xi)


# ---------------------------------------------------------------------------
# tables


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "map_score", "overall_error", "cross_correlation"])
        for r in rows:
            w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


def read_metrics_csv(path) -> list:
    with open(path, newline="") as fh:
        return [(int(r["frame_index"]), float(r["map_score"]), float(r["overall_error"]), float(r["cross_correlation"]))
                for r in csv.DictReader(fh)]


def write_labels_csv(path, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "p_road", "is_ground", "variance_ok", "spacing_ok"])
        v, s = int(labels.variance_ok), int(labels.spacing_ok)
        for i, (p, g) in enumerate(zip(labels.p_road, labels.is_ground)):
            w.writerow([i, repr(float(p)), int(g), v, s])


def read_labels_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1], data[:, 2] != 0


POSE_COLUMNS = ("t", "x", "y", "heading", "speed", "fix_x", "fix_y", "fix_heading", "sigma_n", "sigma_e")


def write_table(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_table(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) if r[k] not in ("", None) else math.nan for r in rows]) for k in rows[0]}
