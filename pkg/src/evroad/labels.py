"""Soft road labels for LIDAR points from a vector road map.

Ground points are moved into the map frame and scored with a Gaussian
localization-error model around the nearest road edge; anything that is not
ground is labelled 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .geometry import Pose2D, VectorMap, distance_to_edges, points_in_map
from .scan import PointCloud, SweepConfig, motion_compensate

GAMMA_DEFAULT = 0.10       # m, lidar / calibration slack added to the pose std
MAX_POSE_STD = 0.5         # m, scans with a worse fix are not labelled
LABEL_SPACING = 10.0       # m of travel between labelled scans


@dataclass(frozen=True)
class LocalizationFix:
    pose: Pose2D
    sigma_n: float
    sigma_e: float

    def __post_init__(self):
        if self.sigma_n < 0 or self.sigma_e < 0:
            raise ValueError("standard deviations must be non-negative")


@dataclass(frozen=True)
class SoftLabel:
    p_road: float
    is_ground: bool


@dataclass(frozen=True)
class LabelParams:
    gamma: float = GAMMA_DEFAULT
    max_pose_std: float = MAX_POSE_STD
    spacing: float = LABEL_SPACING
    sweep: SweepConfig = SweepConfig()


@dataclass
class ScanLabels:
    p_road: np.ndarray
    is_ground: np.ndarray
    variance_ok: bool
    spacing_ok: bool

    @property
    def accepted(self) -> bool:
        return self.variance_ok and self.spacing_ok

    def __getitem__(self, i) -> SoftLabel:
        return SoftLabel(float(self.p_road[i]), bool(self.is_ground[i]))

    def __len__(self):
        return len(self.p_road)


def sigma_bound(fix: LocalizationFix, gamma: float) -> float:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return max(fix.sigma_n, fix.sigma_e) + gamma


def road_probability(d, inside, sigma_b: float) -> np.ndarray:
    """Phi(d / sigma_b) inside the road, 1 - Phi(d / sigma_b) outside.

    At sigma_b = 0 the Gaussian collapses to a step; d = 0 then gives 0.5.
    """
    d = np.asarray(d, dtype=float)
    inside = np.asarray(inside, dtype=bool)
    if sigma_b > 0:
        phi = ndtr(d / sigma_b)
    else:
        phi = np.where(d > 0, 1.0, 0.5)
    return np.where(inside, phi, 1.0 - phi)


def to_map_frame(points: PointCloud, fix: LocalizationFix, v_s: float = 0.0,
                 sweep: SweepConfig = SweepConfig()) -> np.ndarray:
    """Motion-compensate then place sensor-frame xy into the map frame."""
    comp = motion_compensate(points, v_s, sweep)
    return fix.pose.to_world(np.column_stack([comp.x, comp.y]))


def soft_label(point_xy, is_ground: bool, fix: LocalizationFix, vmap: VectorMap, gamma: float = GAMMA_DEFAULT) -> SoftLabel:
    """Label a single point already expressed (and compensated) in the sensor frame."""
    if not is_ground:
        return SoftLabel(0.0, False)
    xy = fix.pose.to_world(np.asarray(point_xy, dtype=float).reshape(1, 2))
    d = distance_to_edges(xy, vmap)
    inside = points_in_map(xy, vmap)
    p = road_probability(d, inside, sigma_bound(fix, gamma))
    return SoftLabel(float(p[0]), True)


def label_scan(scan: PointCloud, ground_mask, fix: LocalizationFix, vmap: VectorMap,
               params: LabelParams = LabelParams(), v_s: float = 0.0,
               travelled_since_last: float = np.inf) -> ScanLabels:
    """Label every point of a scan and report the scan-level gates.

    ``travelled_since_last`` is the path length driven since the previous
    accepted scan; the first scan of a sequence passes with the default.
    """
    if ground_mask is None:
        raise ValueError("a ground mask is required")
    ground = np.asarray(ground_mask, dtype=bool).reshape(-1)
    if len(ground) != len(scan):
        raise ValueError("ground mask length does not match scan")
    if vmap.is_empty():
        raise ValueError("empty vector map")
    ground = ground & scan.valid
    p = np.zeros(len(scan))
    if ground.any():
        xy = to_map_frame(scan.subset(ground), fix, v_s, params.sweep)
        d = distance_to_edges(xy, vmap)
        inside = points_in_map(xy, vmap)
        p[ground] = road_probability(d, inside, sigma_bound(fix, params.gamma))
    variance_ok = max(fix.sigma_n, fix.sigma_e) < params.max_pose_std
    spacing_ok = travelled_since_last >= params.spacing
    return ScanLabels(p, ground, bool(variance_ok), bool(spacing_ok))
