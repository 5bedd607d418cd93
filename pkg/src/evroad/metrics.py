"""Road-grid quality against map-derived ground truth, restricted to observed cells."""
from __future__ import annotations

import numpy as np

from .evidential import R, plausibility_array
from .geometry import Pose2D, VectorMap, points_in_map
from .grid import EvidentialGrid, GridConfig

PROB_CLAMP = 1e-9


class UndefinedCorrelationError(ValueError):
    pass


def ground_truth_grid(vmap: VectorMap, pose: Pose2D, cfg: GridConfig = GridConfig()) -> np.ndarray:
    """1 where the cell centre, placed in the map frame by ``pose``, lies on a road."""
    if vmap.is_empty():
        raise ValueError("empty vector map")
    cx, cy = cfg.cell_centers()
    world = pose.to_world(np.column_stack([cx.ravel(), cy.ravel()]))
    return points_in_map(world, vmap).reshape(cfg.shape)


def _masses(grid) -> np.ndarray:
    return grid.mass if isinstance(grid, EvidentialGrid) else np.asarray(grid, dtype=float)


def _select(grid, gt, mask):
    m = _masses(grid)
    gt = np.asarray(gt, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if m.shape[:-1] != gt.shape or gt.shape != mask.shape:
        raise ValueError("grid, ground truth and mask shapes differ")
    if not mask.any():
        raise ValueError("observation mask is empty")
    return m[mask], gt[mask]


def map_score(grid, gt, mask) -> float:
    m, g = _select(grid, gt, mask)
    p = plausibility_array(m)
    road = 1.0 + np.log2(np.maximum(p[g], PROB_CLAMP))
    off = 1.0 - p[~g]
    return float((road.sum() + off.sum()) / len(p))


def overall_error(grid, gt, mask) -> float:
    m, g = _select(grid, gt, mask)
    return float(np.mean(np.abs(m[:, R] - g)))


def cross_correlation(grid, gt, mask) -> float:
    m, g = _select(grid, gt, mask)
    p = plausibility_array(m)
    g = g.astype(float)
    sp, sg = p.std(), g.std()
    if sp == 0 or sg == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant input")
    return float((np.mean(p * g) - p.mean() * g.mean()) / (sp * sg))
