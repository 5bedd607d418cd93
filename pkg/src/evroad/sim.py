"""Synthetic road worlds and a 32-laser spinning LIDAR simulator.

World frame: flat terrain at z = 0, x east, y north. Roads are shapely
polygons built around centrelines made of straight and constant-curvature
pieces, so every route followed at constant speed is an exact constant
turn-rate trajectory. Traffic drives on the right.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
import shapely.affinity
from shapely.geometry import LineString, Point, box

from .evidential import vacuous_array
from .geometry import Pose2D, VectorMap
from .odometry import OdoMeasurement
from .scan import PointCloud

FAMILIES = ("straight", "curve", "junction", "roundabout")

# VLP-32C style elevation table, topmost laser first (degrees)
VLP32C_ELEVATIONS = (
    15.0, 10.333, 7.0, 4.667, 3.333, 2.333, 1.667, 1.333, 1.0, 0.667, 0.333, 0.0,
    -0.333, -0.667, -1.0, -1.333, -1.667, -2.0, -2.333, -2.667, -3.0, -3.333, -3.667, -4.0,
    -4.667, -5.333, -6.148, -7.254, -8.843, -11.31, -15.639, -25.0,
)

NO_RETURN, OFF_ROAD, ROAD, OBSTACLE = -1, 0, 1, 2

# (mean, std) of return intensity per surface
INTENSITY = {ROAD: (0.10, 0.04), OFF_ROAD: (0.45, 0.08), OBSTACLE: (0.60, 0.15)}


# ---------------------------------------------------------------------------
# centrelines and trajectories


@dataclass(frozen=True)
class Segment:
    length: float
    curvature: float = 0.0  # 1/m, positive turns left


def _advance(x, y, th, u, k):
    if k == 0.0:
        return x + u * np.cos(th), y + u * np.sin(th), th + 0.0 * u
    th1 = th + k * u
    return x + (np.sin(th1) - np.sin(th)) / k, y + (np.cos(th) - np.cos(th1)) / k, th1


@dataclass
class Path:
    start: Pose2D
    segments: list[Segment]

    def __post_init__(self):
        poses = [self.start]
        for seg in self.segments:
            p = poses[-1]
            x, y, th = _advance(p.x, p.y, p.heading, seg.length, seg.curvature)
            poses.append(Pose2D(float(x), float(y), float(th)))
        self._poses = poses
        self._cum = np.concatenate([[0.0], np.cumsum([s.length for s in self.segments])])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(self.segments) - 1)
        # beyond the ends the path continues straight
        before, after = s < 0, s > self.length
        return s, k, before, after

    def pose_at(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s, k, before, after = self._locate(s)
        x, y, th = np.empty_like(s), np.empty_like(s), np.empty_like(s)
        for i in np.unique(k):
            sel = k == i
            p, seg = self._poses[i], self.segments[i]
            u = s[sel] - self._cum[i]
            x[sel], y[sel], th[sel] = _advance(p.x, p.y, p.heading, u, seg.curvature)
        for sel, p, u in ((before, self._poses[0], s), (after, self._poses[-1], s - self.length)):
            if np.any(sel):
                x[sel], y[sel], th[sel] = _advance(p.x, p.y, p.heading, u[sel], 0.0)
        return x, y, th

    def curvature_at(self, s) -> np.ndarray:
        s, k, before, after = self._locate(s)
        kap = np.array([seg.curvature for seg in self.segments])[k]
        return np.where(before | after, 0.0, kap)

    def sample(self, step: float = 0.5) -> np.ndarray:
        n = max(2, int(math.ceil(self.length / step)) + 1)
        x, y, _ = self.pose_at(np.linspace(0.0, self.length, n))
        return np.column_stack([x, y])

    def reversed(self) -> "Path":
        end = self._poses[-1]
        segs = [Segment(s.length, -s.curvature) for s in reversed(self.segments)]
        return Path(Pose2D(end.x, end.y, end.heading + math.pi), segs)


@dataclass
class Trajectory:
    """Constant-speed travel along a path, at arc length ``s0`` when t = 0."""

    path: Path
    speed: float
    s0: float = 0.0

    def arc(self, t):
        return self.s0 + self.speed * np.asarray(t, dtype=float)

    def pose(self, t: float) -> Pose2D:
        x, y, th = self.path.pose_at(self.arc(t))
        return Pose2D(float(x), float(y), float(th))

    def yaw_rate(self, t: float) -> float:
        return float(self.speed * self.path.curvature_at(self.arc(t)))

    def on_path(self, t: float) -> bool:
        return 0.0 <= float(self.arc(t)) <= self.path.length


# ---------------------------------------------------------------------------
# world


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    yaw: float
    length: float
    width: float
    height: float


@dataclass(frozen=True)
class Cylinder:
    cx: float
    cy: float
    radius: float
    height: float


@dataclass
class Vehicle:
    trajectory: Trajectory
    length: float = 4.5
    width: float = 1.8
    height: float = 1.5

    def box_at(self, t: float) -> Box | None:
        if not self.trajectory.on_path(t):
            return None
        p = self.trajectory.pose(t)
        return Box(p.x, p.y, p.heading, self.length, self.width, self.height)


@dataclass
class World:
    family: str
    vmap: VectorMap
    road: object                      # shapely geometry of the merged road surface
    obstacles: list = field(default_factory=list)
    vehicles: list = field(default_factory=list)
    ego: Trajectory | None = None
    sensor_height: float = 1.8

    def __post_init__(self):
        if self.sensor_height <= 0:
            raise ValueError("sensor must sit above the ground")
        shapely.prepare(self.road)

    def on_road(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return shapely.contains_xy(self.road, xy[:, 0], xy[:, 1]) | shapely.intersects_xy(self.road, xy[:, 0], xy[:, 1])

    def boxes_at(self, t: float) -> list:
        out = list(self.obstacles)
        for v in self.vehicles:
            b = v.box_at(t)
            if b is not None:
                out.append(b)
        return out


@dataclass
class WorldConfig:
    family: str = "straight"
    road_width: float = 8.0
    lane_offset: float = 2.0
    n_static: int = 8
    n_vehicles: int = 1
    ego_speed: float = 30 / 3.6
    vehicle_speed: float = 30 / 3.6
    sensor_height: float = 1.8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown world family {self.family!r}; choose from {FAMILIES}")
        if self.road_width <= 0 or not 0 <= self.lane_offset < self.road_width / 2:
            raise ValueError("lane offset must lie within half the road width")
        if self.n_static < 0 or self.n_vehicles < 0 or self.ego_speed < 0 or self.vehicle_speed < 0:
            raise ValueError("counts and speeds must be non-negative")


def _strip(path: Path, width: float):
    return LineString(path.sample(0.5)).buffer(width / 2, cap_style="flat", quad_segs=16)


def _routes(cfg: WorldConfig):
    """Road centrelines plus the ego route and traffic trajectories for one family."""
    w, lo = cfg.road_width, cfg.lane_offset
    vs = cfg.vehicle_speed
    if cfg.family == "straight":
        centre = [Path(Pose2D(-150.0, 0.0, 0.0), [Segment(600.0)])]
        ego = Trajectory(Path(Pose2D(-150.0, -lo, 0.0), [Segment(600.0)]), cfg.ego_speed, 150.0)
        oncoming = Path(Pose2D(-150.0, lo, 0.0), [Segment(600.0)]).reversed()
        traffic = [Trajectory(oncoming, vs, 600.0 - 150.0 - 40.0)]
        shapes = [_strip(p, w) for p in centre]
    elif cfg.family == "curve":
        r = 60.0

        def lane(off):
            rr = r - off
            return Path(Pose2D(-100.0, off, 0.0), [Segment(100.0), Segment(rr * math.pi / 2, 1.0 / rr), Segment(200.0)])

        centre = [lane(0.0)]
        ego = Trajectory(lane(-lo), cfg.ego_speed, 70.0)
        traffic = [Trajectory(lane(lo).reversed(), vs, lane(lo).length - 140.0)]
        shapes = [_strip(p, w) for p in centre]
    elif cfg.family == "junction":
        main = Path(Pose2D(-150.0, 0.0, 0.0), [Segment(450.0)])
        cross = Path(Pose2D(60.0, -150.0, math.pi / 2), [Segment(300.0)])
        centre = [main, cross]
        ego = Trajectory(Path(Pose2D(-150.0, -lo, 0.0), [Segment(450.0)]), cfg.ego_speed, 150.0)
        traffic = [Trajectory(Path(Pose2D(60.0 + lo, -150.0, math.pi / 2), [Segment(300.0)]), vs, 120.0)]
        shapes = [_strip(p, w) for p in centre]
    else:
        cx, r_in, r_out = 60.0, 12.0, 20.0
        rc, rho = (r_in + r_out) / 2, 10.0
        arms = [
            Path(Pose2D(cx - 150.0, 0.0, 0.0), [Segment(150.0 - r_in)]),
            Path(Pose2D(cx + 150.0, 0.0, math.pi), [Segment(150.0 - r_in)]),
            Path(Pose2D(cx, -150.0, math.pi / 2), [Segment(150.0 - r_in)]),
            Path(Pose2D(cx, 150.0, -math.pi / 2), [Segment(150.0 - r_in)]),
        ]
        ring = Point(cx, 0.0).buffer(r_out, quad_segs=32).difference(Point(cx, 0.0).buffer(r_in, quad_segs=32))
        shapes = [ring] + [_strip(p, w) for p in arms]
        centre = arms
        # right turn from the approach lane onto the ring, then counter-clockwise round it
        gap = math.sqrt((rc + rho) ** 2 - (lo + rho) ** 2)
        turn = math.pi / 2 - math.atan2(lo + rho, gap)
        approach = (cx - gap) - (cx - 150.0)
        ego_path = Path(Pose2D(cx - 150.0, -lo, 0.0),
                        [Segment(approach), Segment(rho * turn, -1.0 / rho), Segment(rc * 1.5 * math.pi, 1.0 / rc)])
        ego = Trajectory(ego_path, cfg.ego_speed, approach - 60.0)
        loop = Path(Pose2D(cx, -rc, 0.0), [Segment(rc * 6 * math.pi, 1.0 / rc)])
        traffic = [Trajectory(loop, vs, rc * math.pi)]
    return shapes, centre, ego, traffic


def _place_static(rng, road, route: Path, n: int) -> list:
    out = []
    span = min(route.length, 250.0)
    attempts = 0
    while len(out) < n and attempts < 200 * max(n, 1):
        attempts += 1
        s = rng.uniform(0.0, span)
        x, y, th = route.pose_at(s)
        side = rng.choice([-1.0, 1.0])
        lat = side * rng.uniform(7.0, 20.0)
        px = float(x) - lat * math.sin(float(th))
        py = float(y) + lat * math.cos(float(th))
        if rng.uniform() < 0.5:
            ob = Box(px, py, rng.uniform(0, math.pi), rng.uniform(1.0, 4.0), rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0))
        else:
            ob = Cylinder(px, py, rng.uniform(0.2, 0.8), rng.uniform(1.0, 3.0))
        foot = footprint(ob)
        if foot.distance(road) < 1.5 or any(foot.distance(footprint(o)) < 1.0 for o in out):
            continue
        out.append(ob)
    return out


def footprint(ob):
    """Ground polygon of a box or cylinder obstacle."""
    if isinstance(ob, Cylinder):
        return Point(ob.cx, ob.cy).buffer(ob.radius)
    b = box(ob.cx - ob.length / 2, ob.cy - ob.width / 2, ob.cx + ob.length / 2, ob.cy + ob.width / 2)
    return shapely.affinity.rotate(b, ob.yaw, origin=(ob.cx, ob.cy), use_radians=True)


def generate_world(seed: int, cfg: WorldConfig = WorldConfig()) -> World:
    rng = np.random.default_rng(seed)
    shapes, centre, ego, traffic = _routes(cfg)
    vmap = VectorMap.merged(shapes)
    road = vmap.to_shapely()
    obstacles = _place_static(rng, road, ego.path, cfg.n_static)
    vehicles = [Vehicle(tr) for tr in traffic[:cfg.n_vehicles]]
    return World(cfg.family, vmap, road, obstacles, vehicles, ego, cfg.sensor_height)


# ---------------------------------------------------------------------------
# sensor


@dataclass(frozen=True)
class SensorSpec:
    elevations_deg: tuple = VLP32C_ELEVATIONS
    azimuth_step: float = 0.2
    rate: float = 10.0
    max_range: float = 100.0
    range_noise: float = 0.02
    dropout: float = 0.0

    def __post_init__(self):
        el = np.asarray(self.elevations_deg, dtype=float)
        if len(el) < 1 or np.any(np.diff(el) > 0):
            raise ValueError("elevations must be listed topmost first")
        if self.rate <= 0 or self.max_range <= 0 or self.range_noise < 0 or not 0 <= self.dropout <= 1:
            raise ValueError("invalid sensor parameters")
        cols = 360.0 / self.azimuth_step
        if abs(cols - round(cols)) > 1e-9:
            raise ValueError("azimuth step must divide 360")

    @property
    def rings(self) -> int:
        return len(self.elevations_deg)

    @property
    def cols(self) -> int:
        return int(round(360.0 / self.azimuth_step))

    @property
    def n_rays(self) -> int:
        return self.rings * self.cols


@dataclass
class ScanTruth:
    label: np.ndarray  # NO_RETURN / OFF_ROAD / ROAD / OBSTACLE per ray

    @property
    def is_ground(self) -> np.ndarray:
        return (self.label == ROAD) | (self.label == OFF_ROAD)

    @property
    def is_road(self) -> np.ndarray:
        return self.label == ROAD

    @property
    def is_obstacle(self) -> np.ndarray:
        return self.label == OBSTACLE


@dataclass
class Scan:
    points: PointCloud
    truth: ScanTruth
    pose: Pose2D
    t: float


def _ray_box(ox, oy, oz, dx, dy, dz, b: Box) -> np.ndarray:
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    lx, ly = c * (ox - b.cx) + s * (oy - b.cy), -s * (ox - b.cx) + c * (oy - b.cy)
    ldx, ldy = c * dx + s * dy, -s * dx + c * dy
    t_lo = np.full(np.shape(dx), -np.inf)
    t_hi = np.full(np.shape(dx), np.inf)
    for o, d, lo, hi in ((lx, ldx, -b.length / 2, b.length / 2), (ly, ldy, -b.width / 2, b.width / 2),
                         (oz, dz, 0.0, b.height)):
        o = np.broadcast_to(o, np.shape(d))
        par = np.abs(d) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - o) / d
            t2 = (hi - o) / d
        a, bb = np.minimum(t1, t2), np.maximum(t1, t2)
        inside = (o >= lo) & (o <= hi)
        a = np.where(par, np.where(inside, -np.inf, np.inf), a)
        bb = np.where(par, np.where(inside, np.inf, -np.inf), bb)
        t_lo, t_hi = np.maximum(t_lo, a), np.minimum(t_hi, bb)
    return np.where((t_hi >= t_lo) & (t_lo > 0), t_lo, np.inf)


def _ray_cylinder(ox, oy, oz, dx, dy, dz, cyl: Cylinder) -> np.ndarray:
    px, py = ox - cyl.cx, oy - cyl.cy
    a = dx * dx + dy * dy
    b = 2 * (px * dx + py * dy)
    c = px * px + py * py - cyl.radius ** 2
    disc = b * b - 4 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        t_side = (-b - np.sqrt(np.maximum(disc, 0.0))) / (2 * a)
    z_side = oz + t_side * dz
    side_ok = (disc >= 0) & (a > 1e-12) & (t_side > 0) & (z_side >= 0) & (z_side <= cyl.height)
    out = np.where(side_ok, t_side, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_top = (cyl.height - oz) / dz
    hx, hy = px + t_top * dx, py + t_top * dy
    top_ok = (dz < 0) & (t_top > 0) & (hx * hx + hy * hy <= cyl.radius ** 2)
    return np.minimum(out, np.where(top_ok, t_top, np.inf))


def simulate_scan(world: World, pose: Pose2D, t: float = 0.0, spec: SensorSpec = SensorSpec(),
                  seed=None, ego_speed: float = 0.0) -> Scan:
    """Cast every ray of one revolution, ring-major (ray index = ring * cols + col).

    With ``ego_speed`` > 0 the sensor keeps moving along its heading while
    spinning; each point is then reported in the sensor frame at its own
    firing time, which is what intra-scan compensation undoes.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    el = np.radians(np.asarray(spec.elevations_deg, dtype=float))
    az_deg = (np.arange(spec.cols) + 0.5) * spec.azimuth_step
    el_g, az_g = np.meshgrid(el, np.radians(az_deg), indexing="ij")
    el_g, az_g = el_g.ravel(), az_g.ravel()
    az_flat = np.broadcast_to(az_deg, (spec.rings, spec.cols)).ravel()
    ring = np.repeat(np.arange(spec.rings), spec.cols)

    # local unit directions, then world
    lx, ly, lz = np.cos(el_g) * np.cos(az_g), np.cos(el_g) * np.sin(az_g), np.sin(el_g)
    ch, sh = math.cos(pose.heading), math.sin(pose.heading)
    dx, dy, dz = ch * lx - sh * ly, sh * lx + ch * ly, lz
    shift = ego_speed * (az_flat / 360.0) / spec.rate
    ox, oy, oz = pose.x + shift * ch, pose.y + shift * sh, world.sensor_height

    with np.errstate(divide="ignore"):
        t_ground = np.where(dz < 0, oz / -np.where(dz < 0, dz, -1.0), np.inf)
    t_hit = t_ground.copy()
    label = np.where(np.isfinite(t_ground), OFF_ROAD, NO_RETURN)
    for ob in world.boxes_at(t):
        th = _ray_box(ox, oy, oz, dx, dy, dz, ob) if isinstance(ob, Box) else _ray_cylinder(ox, oy, oz, dx, dy, dz, ob)
        closer = th < t_hit
        t_hit = np.where(closer, th, t_hit)
        label = np.where(closer, OBSTACLE, label)
    hit = t_hit <= spec.max_range
    label = np.where(hit, label, NO_RETURN)
    ground = label == OFF_ROAD
    if ground.any():
        gx = np.broadcast_to(ox, dx.shape)[ground] + t_hit[ground] * dx[ground]
        gy = np.broadcast_to(oy, dy.shape)[ground] + t_hit[ground] * dy[ground]
        label[np.flatnonzero(ground)[world.on_road(np.column_stack([gx, gy]))]] = ROAD

    n = spec.n_rays
    rng_noise = rng.normal(0.0, spec.range_noise, n) if spec.range_noise > 0 else np.zeros(n)
    drop = rng.uniform(size=n) < spec.dropout if spec.dropout > 0 else np.zeros(n, dtype=bool)
    valid = hit & ~drop
    rr = np.where(valid, np.maximum(np.where(hit, t_hit, 0.0) + rng_noise, 1e-3), 0.0)
    intensity = np.zeros(n)
    for lab, (mu, sd) in INTENSITY.items():
        sel = valid & (label == lab)
        intensity[sel] = np.clip(rng.normal(mu, sd, sel.sum()), 0.0, None)
    label = np.where(valid, label, NO_RETURN)
    pts = PointCloud(rr * lx, rr * ly, rr * lz, rr, az_flat, np.degrees(el_g), ring, intensity, valid)
    return Scan(pts, ScanTruth(label), pose, t)


# ---------------------------------------------------------------------------
# sequences


@dataclass(frozen=True)
class OdoNoise:
    speed_std: float = 0.05      # m/s
    heading_std: float = 0.002   # rad
    yaw_rate_std: float = 0.002  # rad/s
    speed_heading_rate: float = 10.0
    yaw_rate_rate: float = 100.0


VARIANCE_FLOOR = 1e-12


@dataclass
class Sequence:
    world: World
    spec: SensorSpec
    times: np.ndarray
    poses: list
    speeds: np.ndarray
    measurements: list
    seed: int
    rolling_shutter: bool = True

    def __len__(self):
        return len(self.times)

    def scan(self, k: int) -> Scan:
        """Frame ``k``, generated on demand with a per-frame seed."""
        speed = float(self.speeds[k]) if self.rolling_shutter else 0.0
        return simulate_scan(self.world, self.poses[k], float(self.times[k]), self.spec,
                             np.random.default_rng([self.seed, k]), ego_speed=speed)


def simulate_sequence(world: World, duration: float, spec: SensorSpec = SensorSpec(),
                      noise: OdoNoise = OdoNoise(), seed: int = 0, trajectory: Trajectory | None = None,
                      rolling_shutter: bool = True) -> Sequence:
    traj = trajectory if trajectory is not None else world.ego
    if traj is None:
        raise ValueError("world has no ego trajectory")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n = int(round(duration * spec.rate))
    times = np.arange(n) / spec.rate
    poses = [traj.pose(t) for t in times]
    speeds = np.full(n, traj.speed)
    rng = np.random.default_rng([seed, 1_000_003])
    ms = []
    n_sh = int(round(duration * noise.speed_heading_rate))
    for k in range(n_sh):
        t = k / noise.speed_heading_rate
        p = traj.pose(t)
        v = traj.speed + rng.normal(0.0, noise.speed_std) if noise.speed_std > 0 else traj.speed
        h = p.heading + rng.normal(0.0, noise.heading_std) if noise.heading_std > 0 else p.heading
        ms.append(OdoMeasurement("speed_heading", (float(v), float(h)),
                                 (max(noise.speed_std ** 2, VARIANCE_FLOOR), max(noise.heading_std ** 2, VARIANCE_FLOOR)), t))
    n_yr = int(round(duration * noise.yaw_rate_rate))
    for k in range(n_yr):
        t = k / noise.yaw_rate_rate
        w = traj.yaw_rate(t) + (rng.normal(0.0, noise.yaw_rate_std) if noise.yaw_rate_std > 0 else 0.0)
        ms.append(OdoMeasurement("yaw_rate", (float(w),), (max(noise.yaw_rate_std ** 2, VARIANCE_FLOOR),), t))
    ms.sort(key=lambda m: (m.timestamp, m.kind))
    return Sequence(world, spec, times, poses, speeds, ms, seed, rolling_shutter)


# ---------------------------------------------------------------------------
# classifier modes

FEATURE_NAMES = ("z", "intensity", "range")


def point_features(points: PointCloud) -> np.ndarray:
    return np.column_stack([points.z, points.intensity, points.range])


def perfect_masses(points: PointCloud, truth: ScanTruth) -> np.ndarray:
    """{R: 1} on road returns, {notR: 1} on other returns, vacuous on missing ones."""
    m = vacuous_array((len(points),))
    v = points.valid
    m[v & truth.is_road] = (1.0, 0.0, 0.0)
    m[v & ~truth.is_road] = (0.0, 1.0, 0.0)
    return m


def classifier_masses(points: PointCloud, classifier) -> np.ndarray:
    m = vacuous_array((len(points),))
    v = points.valid
    if v.any():
        m[v] = classifier.masses(point_features(points.subset(v)))
    return m
