"""Evidential road grids: per-scan projection, conflict analysis, accumulation.

Grids live in the sensor frame of the scan that produced them: axis 0 runs
along +x (forward), axis 1 along +y (left), and the sensor sits at the grid
centre. Each cell holds (m_R, m_notR, m_omega), the mean elevation of the
points that fell into it during the last scan and a cumulative point count.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .evidential import NOT_R, R, dempster, log_commonality, masses_from_log_commonality, vacuous_array
from .geometry import Pose2D, RigidMotion2D
from .scan import PointCloud

OBS_THRESHOLD = 0.5
DISPLACED_THRESHOLD = 0.5
MAX_FILTER_SIZE = 5
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class GridConfig:
    length: float = 80.0   # m along x
    width: float = 50.0    # m along y
    cell: float = 0.2      # m
    z_min: float = -2.5    # m, sensor frame
    z_max: float = 0.0
    nu: float = 4.0        # growth of the elevation discount
    xi: float = 1.5        # m, height above which conflict is not discounted

    def __post_init__(self):
        if min(self.length, self.width, self.cell) <= 0:
            raise ValueError("grid dimensions and cell size must be positive")
        if self.z_min >= self.z_max:
            raise ValueError("z_min must be below z_max")

    @property
    def shape(self) -> tuple[int, int]:
        return int(round(self.length / self.cell)), int(round(self.width / self.cell))

    @property
    def x_min(self) -> float:
        return -self.shape[0] * self.cell / 2

    @property
    def y_min(self) -> float:
        return -self.shape[1] * self.cell / 2

    def cell_index(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer cell indices and a mask of points that fall inside the grid."""
        i = np.floor((np.asarray(x) - self.x_min) / self.cell).astype(np.int64)
        j = np.floor((np.asarray(y) - self.y_min) / self.cell).astype(np.int64)
        nx, ny = self.shape
        inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        return i, j, inside

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        return _centers(self)


_CENTER_CACHE: dict = {}


def _centers(cfg: GridConfig):
    key = (cfg.shape, cfg.cell)
    if key not in _CENTER_CACHE:
        nx, ny = cfg.shape
        xs = cfg.x_min + (np.arange(nx) + 0.5) * cfg.cell
        ys = cfg.y_min + (np.arange(ny) + 0.5) * cfg.cell
        _CENTER_CACHE[key] = np.meshgrid(xs, ys, indexing="ij")
    return _CENTER_CACHE[key]


@dataclass
class EvidentialGrid:
    mass: np.ndarray        # (nx, ny, 3)
    z_mean: np.ndarray      # (nx, ny), NaN where the last scan had no point
    count: np.ndarray       # (nx, ny) cumulative number of projected points
    cfg: GridConfig = field(default_factory=GridConfig)
    pose: Pose2D | None = None
    timestamp: float = 0.0

    @classmethod
    def vacuous(cls, cfg: GridConfig = GridConfig(), pose: Pose2D | None = None, timestamp: float = 0.0) -> "EvidentialGrid":
        shape = cfg.shape
        return cls(vacuous_array(shape), np.full(shape, np.nan), np.zeros(shape, dtype=np.int64), cfg, pose, timestamp)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape[:2]

    @property
    def observed(self) -> np.ndarray:
        return self.count > 0

    def copy(self) -> "EvidentialGrid":
        return replace(self, mass=self.mass.copy(), z_mean=self.z_mean.copy(), count=self.count.copy())


@dataclass
class ConflictMasses:
    """Per-cell masses on {O, notO, Omega} and {D, notD, Omega}."""

    obs: np.ndarray
    displaced: np.ndarray


# ---------------------------------------------------------------------------
# stages


def build_scan_grid(points: PointCloud | np.ndarray, masses: np.ndarray, cfg: GridConfig = GridConfig(),
                    pose: Pose2D | None = None, timestamp: float = 0.0) -> EvidentialGrid:
    """Fuse every point's mass into its cell through summed log-commonalities.

    ``points`` is a PointCloud (invalid returns are skipped) or an (n, 3) xyz
    array. Points outside [z_min, z_max] or outside the grid are dropped.
    """
    if isinstance(points, PointCloud):
        xyz = points.xyz()
        keep = points.valid.copy()
    else:
        xyz = np.asarray(points, dtype=float).reshape(-1, 3)
        keep = np.ones(len(xyz), dtype=bool)
    masses = np.asarray(masses, dtype=float).reshape(-1, 3)
    if len(masses) != len(xyz):
        raise ValueError("one mass per point required")
    z = xyz[:, 2]
    keep &= (z >= cfg.z_min) & (z <= cfg.z_max)
    i, j, inside = cfg.cell_index(xyz[:, 0], xyz[:, 1])
    keep &= inside
    nx, ny = cfg.shape
    flat = i[keep] * ny + j[keep]
    lq = log_commonality(masses[keep])
    size = nx * ny
    count = np.bincount(flat, minlength=size)
    z_sum = np.bincount(flat, weights=z[keep], minlength=size)
    lq_sum = np.column_stack([np.bincount(flat, weights=lq[:, k], minlength=size) for k in range(3)])

    mass = vacuous_array((size,))
    hit = count > 0
    mass[hit] = masses_from_log_commonality(lq_sum[hit])
    z_mean = np.full(size, np.nan)
    z_mean[hit] = z_sum[hit] / count[hit]
    return EvidentialGrid(mass.reshape(nx, ny, 3), z_mean.reshape(nx, ny), count.reshape(nx, ny), cfg, pose, timestamp)


def alpha_discount(z_bar, nu: float = 4.0, xi: float = 1.5):
    """min(exp(nu * (z_bar + xi)), 1): close to 0 for ground-level cells, 1 above -xi."""
    z_bar = np.asarray(z_bar, dtype=float)
    out = np.minimum(np.exp(np.minimum(nu * (z_bar + xi), 0.0)), 1.0)
    return float(out) if out.ndim == 0 else out


def conflict_masses(scan: EvidentialGrid, road: EvidentialGrid) -> ConflictMasses:
    if scan.shape != road.shape:
        raise ValueError(f"grid shapes differ: {scan.shape} vs {road.shape}")
    cfg = scan.cfg
    # point-free scan cells carry no R/notR mass, so the discount value there is irrelevant
    alpha = alpha_discount(np.nan_to_num(scan.z_mean, nan=0.0), cfg.nu, cfg.xi)
    o = alpha * road.mass[..., R] * scan.mass[..., NOT_R]
    d = (1.0 - alpha) * scan.mass[..., R] * road.mass[..., NOT_R]
    obs = np.stack([o, np.zeros_like(o), 1.0 - o], axis=-1)
    disp = np.stack([d, np.zeros_like(d), 1.0 - d], axis=-1)
    return ConflictMasses(obs, disp)


def remove_displaced(road: EvidentialGrid, displaced: np.ndarray, threshold: float = DISPLACED_THRESHOLD) -> EvidentialGrid:
    """Reset road cells whose displaced-object mass exceeds ``threshold`` (strictly)."""
    d = np.asarray(displaced)
    d = d[..., 0] if d.ndim == 3 else d
    reset = d > threshold
    out = road.copy()
    out.mass[reset] = (0.0, 0.0, 1.0)
    return out


def detect_objects(scan: EvidentialGrid, obs: np.ndarray, threshold: float = OBS_THRESHOLD,
                   size: int = MAX_FILTER_SIZE) -> tuple[np.ndarray, np.ndarray, EvidentialGrid]:
    """Threshold, inflate and cluster obstacle evidence; clear clustered scan cells.

    Returns (ObsMap, ClusterMap, scrubbed scan). Cluster ids run 1..K in
    raster order of each component's first cell.
    """
    o = np.asarray(obs)
    o = o[..., 0] if o.ndim == 3 else o
    obs_map = o > threshold
    if not obs_map.any():
        return obs_map, np.zeros(obs_map.shape, dtype=np.int32), scan
    inflated = ndimage.maximum_filter(obs_map, size=size, mode="constant", cval=False)
    clusters, _ = ndimage.label(inflated, structure=EIGHT_CONNECTED)
    out = scan.copy()
    out.mass[clusters > 0] = (0.0, 0.0, 1.0)
    return obs_map, clusters.astype(np.int32), out


def fuse_grids(road: EvidentialGrid, scan: EvidentialGrid) -> EvidentialGrid:
    """Cell-wise Dempster fusion; totally conflicting cells become vacuous."""
    if scan.shape != road.shape:
        raise ValueError(f"grid shapes differ: {scan.shape} vs {road.shape}")
    mass = dempster(road.mass, scan.mass, on_total_conflict="vacuous")
    has = scan.count > 0
    z_mean = np.where(has, scan.z_mean, road.z_mean)
    return EvidentialGrid(mass, z_mean, road.count + scan.count, scan.cfg, scan.pose, scan.timestamp)


def reproject_grid(road: EvidentialGrid, motion: RigidMotion2D, pose: Pose2D | None = None,
                   timestamp: float | None = None) -> EvidentialGrid:
    """Resample a grid into the frame reached after ``motion`` (old frame -> new frame).

    Each new cell centre is taken back through the inverse motion and copies
    the old cell containing it; centres falling outside the old grid start
    vacuous.
    """
    cfg = road.cfg
    if not all(np.isfinite([motion.angle, motion.tx, motion.ty])):
        raise ValueError("non-finite motion")
    cx, cy = cfg.cell_centers()
    back = motion.inverse()
    c, s = np.cos(back.angle), np.sin(back.angle)
    ox = c * cx - s * cy + back.tx
    oy = s * cx + c * cy + back.ty
    i, j, inside = cfg.cell_index(ox, oy)
    out = EvidentialGrid.vacuous(cfg, pose if pose is not None else road.pose,
                                 road.timestamp if timestamp is None else timestamp)
    out.mass[inside] = road.mass[i[inside], j[inside]]
    out.z_mean[inside] = road.z_mean[i[inside], j[inside]]
    out.count[inside] = road.count[i[inside], j[inside]]
    return out


# ---------------------------------------------------------------------------
# pipeline


STAGES = ("reproject", "scan_grid", "conflict", "remove_displaced", "detect_objects", "fuse")


@dataclass
class StepResult:
    road: EvidentialGrid
    clusters: np.ndarray
    obs_map: np.ndarray
    scan: EvidentialGrid
    conflict: ConflictMasses
    timings_ms: dict[str, float]

    @property
    def n_clusters(self) -> int:
        return int(self.clusters.max()) if self.clusters.size else 0


class RoadMapper:
    """Holds the RoadGrid between scans; one writer, one step at a time."""

    def __init__(self, cfg: GridConfig = GridConfig()):
        self.cfg = cfg
        self.road = EvidentialGrid.vacuous(cfg)

    def step(self, points: PointCloud | np.ndarray, masses: np.ndarray,
             motion: RigidMotion2D | None = None, pose: Pose2D | None = None,
             timestamp: float = 0.0) -> StepResult:
        """Advance by one scan. ``motion`` maps the previous scan frame to this one."""
        t = {}
        t0 = time.perf_counter()
        road = self.road
        if motion is not None:
            road = reproject_grid(road, motion, pose, timestamp)
        t1 = time.perf_counter()
        scan = build_scan_grid(points, masses, self.cfg, pose, timestamp)
        t2 = time.perf_counter()
        conflict = conflict_masses(scan, road)
        t3 = time.perf_counter()
        road = remove_displaced(road, conflict.displaced)
        t4 = time.perf_counter()
        obs_map, clusters, scrubbed = detect_objects(scan, conflict.obs)
        t5 = time.perf_counter()
        fused = fuse_grids(road, scrubbed)
        t6 = time.perf_counter()
        for name, a, b in zip(STAGES, (t0, t1, t2, t3, t4, t5), (t1, t2, t3, t4, t5, t6)):
            t[name] = (b - a) * 1e3
        t["total"] = (t6 - t0) * 1e3
        self.road = fused
        return StepResult(fused, clusters, obs_map, scan, conflict, t)
