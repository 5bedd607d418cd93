import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evroad.scan import (
    CHANNELS, N_COLS, N_RINGS, PointCloud, PointRecord, SweepConfig, azimuth_column, motion_compensate,
    project_to_range_image,
)


def record(ring, az, rng=5.0, **kw):
    a = np.radians(az)
    return PointRecord(rng * np.cos(a), rng * np.sin(a), 0.0, rng, az, ring, **kw)


def random_cloud(rng, n=3000):
    xyz = rng.normal(0, 20, (n, 3))
    return PointCloud.from_xyz(xyz, rng.integers(0, N_RINGS, n), rng.uniform(0, 1, n))


class TestRangeImage:
    def test_origin_cell(self):
        img = project_to_range_image(PointCloud.from_records([record(0, 0.0)]))
        assert img.validity[0, 0] and img.validity.sum() == 1

    def test_last_cell(self):
        img = project_to_range_image(PointCloud.from_records([record(31, 359.9)]))
        assert img.validity[31, 1799] and img.validity.sum() == 1

    def test_nearer_point_wins(self):
        img = project_to_range_image(PointCloud.from_records([record(4, 10.05, 5.0), record(4, 10.1, 3.0)]))
        assert img.validity.sum() == 1
        assert img.channel("range")[4, 50] == 3.0

    def test_invalid_cells_zeroed(self):
        img = project_to_range_image(PointCloud.from_records([record(2, 1.0), record(3, 1.0, valid=False)]))
        assert img.validity.sum() == 1
        assert np.all(img.data[~img.validity] == 0)

    def test_ring_out_of_range(self):
        with pytest.raises(ValueError):
            project_to_range_image(PointCloud.from_records([record(32, 1.0)]))

    def test_columns_cover_full_turn(self):
        assert N_COLS * 0.2 == pytest.approx(360.0)
        assert np.array_equal(azimuth_column([0.0, 0.19999, 0.2, 359.999]), [0, 0, 1, 1799])

    def test_idempotent(self, rng):
        img = project_to_range_image(random_cloud(rng))
        again = project_to_range_image(img.to_points())
        assert np.array_equal(img.data, again.data)

    def test_round_trip_reproduces_winners(self, rng):
        cloud = random_cloud(rng)
        img = project_to_range_image(cloud)
        cols = azimuth_column(cloud.azimuth_deg)
        for r, c in zip(*np.nonzero(img.validity)):
            here = np.nonzero((cloud.ring == r) & (cols == c))[0]
            win = here[np.argmin(cloud.range[here])]
            expect = [cloud.x[win], cloud.y[win], cloud.z[win], cloud.azimuth_deg[win],
                      cloud.elevation_deg[win], cloud.range[win], cloud.intensity[win], 1.0]
            assert np.array_equal(img.data[r, c], expect)

    def test_channel_layout(self):
        assert CHANNELS[-1] == "validity" and len(CHANNELS) == 8
        assert project_to_range_image(PointCloud.empty()).data.shape == (32, 1800, 8)


class TestMotionCompensation:
    def test_zero_azimuth_unchanged(self):
        cloud = PointCloud.from_records([record(0, 0.0)])
        assert motion_compensate(cloud, 10.0).x[0] == cloud.x[0]

    def test_half_turn(self):
        cloud = PointCloud.from_records([record(0, 180.0)])
        out = motion_compensate(cloud, 10.0, SweepConfig(rate=10.0))
        assert out.x[0] - cloud.x[0] == pytest.approx(0.5, abs=1e-12)
        assert out.y[0] == cloud.y[0] and out.z[0] == cloud.z[0]

    def test_zero_speed_identity(self, rng):
        cloud = random_cloud(rng)
        out = motion_compensate(cloud, 0.0)
        assert np.array_equal(out.xyz(), cloud.xyz())

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            SweepConfig(rate=0.0)

    @given(st.floats(-40, 40), st.integers(0, 2**32 - 1))
    def test_preserves_per_point_attributes(self, v, seed):
        cloud = random_cloud(np.random.default_rng(seed), 200)
        out = motion_compensate(cloud, v)
        assert len(out) == len(cloud)
        for name in ("ring", "azimuth_deg", "intensity", "y", "z", "valid"):
            assert np.array_equal(getattr(out, name), getattr(cloud, name))
        expected = cloud.x + 0.1 * cloud.azimuth_deg / 360.0 * v
        assert np.allclose(out.x, expected, atol=1e-12)


def test_records_round_trip(rng):
    cloud = random_cloud(rng, 50)
    back = PointCloud.from_records(cloud.records())
    for name in ("x", "y", "z", "range", "ring", "valid"):
        assert np.array_equal(getattr(back, name), getattr(cloud, name))
