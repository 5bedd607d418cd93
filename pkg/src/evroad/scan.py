"""LIDAR scans as point clouds and dense 32 x 1800 range images.

Azimuths are degrees counter-clockwise from the sensor +x axis, in [0, 360).
Ring 0 is the topmost laser. A scan sweep starts at azimuth 0.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

N_RINGS = 32
N_COLS = 1800
AZIMUTH_STEP_DEG = 0.2
CHANNELS = ("x", "y", "z", "azimuth", "elevation", "range", "intensity", "validity")


@dataclass(frozen=True)
class PointRecord:
    x: float
    y: float
    z: float
    range: float
    azimuth_deg: float
    ring: int
    intensity: float = 0.0
    valid: bool = True
    elevation_deg: float = 0.0


@dataclass
class PointCloud:
    """Column-oriented point records; every field is an array of equal length."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    range: np.ndarray
    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray
    ring: np.ndarray
    intensity: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            dtype = {"ring": np.int64, "valid": bool}.get(f.name, float)
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=dtype).reshape(-1))
        n = len(self.x)
        if any(len(getattr(self, f.name)) != n for f in fields(self)):
            raise ValueError("point cloud columns differ in length")

    def __len__(self):
        return len(self.x)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(*([np.zeros(0)] * 9))

    @classmethod
    def from_records(cls, records) -> "PointCloud":
        records = list(records)
        if not records:
            return cls.empty()
        return cls(**{f.name: [getattr(r, f.name) for r in records] for f in fields(cls)})

    @classmethod
    def from_xyz(cls, xyz, ring, intensity=None, valid=None) -> "PointCloud":
        """Build a cloud from Cartesian points, deriving range and angles."""
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        rng = np.linalg.norm(xyz, axis=1)
        az = np.degrees(np.arctan2(xyz[:, 1], xyz[:, 0])) % 360.0
        with np.errstate(invalid="ignore", divide="ignore"):
            el = np.degrees(np.arcsin(np.where(rng > 0, xyz[:, 2] / np.where(rng > 0, rng, 1.0), 0.0)))
        n = len(xyz)
        return cls(
            xyz[:, 0], xyz[:, 1], xyz[:, 2], rng, az, el,
            np.broadcast_to(ring, (n,)),
            np.zeros(n) if intensity is None else intensity,
            rng > 0 if valid is None else valid,
        )

    def records(self) -> list[PointRecord]:
        return [
            PointRecord(float(self.x[i]), float(self.y[i]), float(self.z[i]), float(self.range[i]),
                        float(self.azimuth_deg[i]), int(self.ring[i]), float(self.intensity[i]),
                        bool(self.valid[i]), float(self.elevation_deg[i]))
            for i in range(len(self))
        ]

    def subset(self, mask) -> "PointCloud":
        return PointCloud(**{f.name: getattr(self, f.name)[mask] for f in fields(self)})

    def xyz(self) -> np.ndarray:
        return np.column_stack([self.x, self.y, self.z])

    def copy(self) -> "PointCloud":
        return PointCloud(**{f.name: getattr(self, f.name).copy() for f in fields(self)})


@dataclass(frozen=True)
class SweepConfig:
    rate: float = 10.0  # Hz

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("sweep rate must be positive")

    @property
    def sweep_period(self) -> float:
        return 1.0 / self.rate


@dataclass
class RangeImage:
    """Dense (rows, cols, 8) image; channel order given by ``CHANNELS``."""

    data: np.ndarray

    @property
    def validity(self) -> np.ndarray:
        return self.data[..., CHANNELS.index("validity")] > 0

    def channel(self, name: str) -> np.ndarray:
        return self.data[..., CHANNELS.index(name)]

    def to_points(self) -> PointCloud:
        """Valid cells as points, in raster order."""
        rows, cols = np.nonzero(self.validity)
        c = {name: self.data[rows, cols, i] for i, name in enumerate(CHANNELS)}
        return PointCloud(c["x"], c["y"], c["z"], c["range"], c["azimuth"], c["elevation"],
                          rows, c["intensity"], np.ones(len(rows), dtype=bool))


def azimuth_column(azimuth_deg) -> np.ndarray:
    az = np.asarray(azimuth_deg, dtype=float)
    return np.floor(az / AZIMUTH_STEP_DEG).astype(np.int64) % N_COLS


def project_to_range_image(points: PointCloud, rows: int = N_RINGS, cols: int = N_COLS) -> RangeImage:
    """Scatter valid points into the range image; on collision the nearer return wins."""
    ring = points.ring
    if np.any((ring < 0) | (ring >= rows)):
        raise ValueError(f"ring index outside [0, {rows - 1}]")
    keep = points.valid & (points.range > 0)
    r = ring[keep]
    c = azimuth_column(points.azimuth_deg[keep]) % cols
    feats = np.column_stack([
        points.x[keep], points.y[keep], points.z[keep], points.azimuth_deg[keep],
        points.elevation_deg[keep], points.range[keep], points.intensity[keep],
        np.ones(keep.sum()),
    ])
    flat = r * cols + c
    order = np.lexsort((feats[:, 5], flat))
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat[order][1:] != flat[order][:-1]
    win = order[first]
    data = np.zeros((rows, cols, len(CHANNELS)))
    data[r[win], c[win]] = feats[win]
    return RangeImage(data)


def motion_compensate(points: PointCloud, v_s: float, cfg: SweepConfig = SweepConfig()) -> PointCloud:
    """Shift each point forward by the distance driven since the sweep started.

    The time offset of a return is ``S * azimuth / 360``; platform rotation
    during the sweep is ignored.
    """
    if not np.isfinite(v_s):
        raise ValueError("speed must be finite")
    dt = cfg.sweep_period * points.azimuth_deg / 360.0
    out = points.copy()
    out.x = np.where(points.valid, points.x + dt * v_s, points.x)
    return out


def with_valid_only(points: PointCloud) -> PointCloud:
    return points.subset(points.valid)


__all__ = [
    "PointRecord", "PointCloud", "SweepConfig", "RangeImage", "project_to_range_image",
    "motion_compensate", "azimuth_column", "N_RINGS", "N_COLS", "CHANNELS",
]
