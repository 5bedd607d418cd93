import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evroad.geometry import Polygon, Pose2D, VectorMap
from evroad.grid import EvidentialGrid, GridConfig
from evroad.metrics import (
    UndefinedCorrelationError, cross_correlation, ground_truth_grid, map_score, overall_error,
)

SMALL = GridConfig(length=4.0, width=2.0)  # 20 x 10


def certain_grid(gt):
    m = np.zeros(gt.shape + (3,))
    m[gt] = (1, 0, 0)
    m[~gt] = (0, 1, 0)
    return m


def stripes():
    gt = np.zeros(SMALL.shape, bool)
    gt[:, 3:7] = True
    return gt


class TestGroundTruth:
    def test_covering_map(self):
        vmap = VectorMap([Polygon(np.array([[-100.0, -100], [100, -100], [100, 100], [-100, 100]]))])
        assert ground_truth_grid(vmap, Pose2D(0, 0, 0)).all()

    def test_far_map(self):
        vmap = VectorMap([Polygon(np.array([[500.0, 500], [510, 500], [510, 510]]))])
        assert not ground_truth_grid(vmap, Pose2D(0, 0, 0)).any()

    def test_ten_metre_band(self):
        vmap = VectorMap([Polygon(np.array([[-100.0, -5], [100, -5], [100, 5], [-100, 5]]))])
        gt = ground_truth_grid(vmap, Pose2D(0, 0, 0))
        assert np.all(gt.sum(axis=1) == 50)
        # rotated a quarter turn the band runs across axis 0 instead
        gt = ground_truth_grid(vmap, Pose2D(0, 0, np.pi / 2))
        assert np.all(gt.sum(axis=0) == 50)

    def test_empty_map(self):
        with pytest.raises(ValueError):
            ground_truth_grid(VectorMap([]), Pose2D(0, 0, 0))


class TestMetrics:
    def test_perfect(self):
        gt = stripes()
        mask = np.ones(gt.shape, bool)
        m = certain_grid(gt)
        assert abs(map_score(m, gt, mask) - 1.0) < 1e-12
        assert overall_error(m, gt, mask) == 0.0
        assert abs(cross_correlation(m, gt, mask) - 1.0) < 1e-12

    def test_inverted(self):
        gt = stripes()
        mask = np.ones(gt.shape, bool)
        assert abs(cross_correlation(certain_grid(~gt), gt, mask) + 1.0) < 1e-12

    def test_vacuous(self):
        gt = stripes()
        mask = np.zeros(gt.shape, bool)
        mask[:, :5] = True
        m = np.tile([0.0, 0.0, 1.0], gt.shape + (1,))
        assert overall_error(m, gt, mask) == pytest.approx(gt[mask].mean(), abs=1e-15)
        # p = 0.5 everywhere: road cells add 0, non-road cells add 0.5
        assert map_score(m, gt, mask) == pytest.approx(0.5 * (~gt[mask]).mean(), abs=1e-15)

    def test_single_cells(self):
        gt = np.zeros(SMALL.shape, bool)
        gt[0, 0] = True
        mask = np.zeros(SMALL.shape, bool)
        mask[0, 0] = True
        m = np.tile([0.0, 0.0, 1.0], gt.shape + (1,))
        assert map_score(m, gt, mask) == 0.0
        m[0, 0] = (0.3, 0.0, 0.7)
        assert overall_error(m, gt, mask) == pytest.approx(0.7, abs=1e-15)
        mask2 = np.zeros(SMALL.shape, bool)
        mask2[1, 1] = True
        m[1, 1] = (0, 1, 0)
        assert map_score(m, gt, mask2) == 1.0

    def test_clamped_log(self):
        gt = np.ones(SMALL.shape, bool)
        m = np.tile([0.0, 1.0, 0.0], gt.shape + (1,))
        assert map_score(m, gt, gt) == pytest.approx(1 + np.log2(1e-9))

    def test_accepts_grid_objects(self):
        gt = stripes()
        g = EvidentialGrid.vacuous(SMALL)
        g.mass[:] = certain_grid(gt)
        assert overall_error(g, gt, np.ones(gt.shape, bool)) == 0.0

    def test_errors(self):
        gt = stripes()
        with pytest.raises(ValueError):
            overall_error(certain_grid(gt), gt, np.zeros(gt.shape, bool))
        with pytest.raises(ValueError):
            overall_error(certain_grid(gt), gt, np.ones((3, 3), bool))
        with pytest.raises(UndefinedCorrelationError):
            cross_correlation(certain_grid(gt), np.ones(gt.shape, bool), np.ones(gt.shape, bool))

    def test_uncorrelated(self, rng):
        gt = rng.random((100, 100)) < 0.5
        m = rng.dirichlet(np.ones(3), size=(100, 100))
        assert abs(cross_correlation(m, gt, np.ones(gt.shape, bool))) < 0.1

    @given(st.integers(0, 2**32 - 1))
    def test_unmasked_cells_do_not_matter(self, seed):
        rng = np.random.default_rng(seed)
        gt = stripes()
        mask = rng.random(gt.shape) < 0.5
        mask[0, 3] = mask[0, 0] = True
        a = rng.dirichlet(np.ones(3), size=gt.shape)
        b = a.copy()
        b[~mask] = rng.dirichlet(np.ones(3), size=(~mask).sum())
        for f in (map_score, overall_error, cross_correlation):
            assert f(a, gt, mask) == f(b, gt, mask)

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.5))
    def test_map_score_monotone(self, seed, bump):
        rng = np.random.default_rng(seed)
        gt = stripes()
        mask = np.ones(gt.shape, bool)
        m = rng.dirichlet(np.ones(3), size=gt.shape) * 0.5
        m[..., 2] += 0.5
        more = m.copy()
        # move mass from notR to R on road cells and the other way on the rest
        shift = np.minimum(m[..., 1], bump)
        more[gt, 1] -= shift[gt]
        more[gt, 0] += shift[gt]
        shift = np.minimum(m[..., 0], bump)
        more[~gt, 0] -= shift[~gt]
        more[~gt, 1] += shift[~gt]
        assert map_score(more, gt, mask) >= map_score(m, gt, mask) - 1e-12
