import math

import numpy as np
import pytest
from shapely.geometry import Polygon as ShapelyPolygon

from evroad.geometry import Pose2D
from evroad.sim import (
    FAMILIES, NO_RETURN, OBSTACLE, Box, Cylinder, OdoNoise, SensorSpec, Trajectory, WorldConfig,
    generate_world, perfect_masses, simulate_scan, simulate_sequence,
)

QUIET = SensorSpec(range_noise=0.0)


def empty_world(**kw):
    w = generate_world(0, WorldConfig(n_static=0, n_vehicles=0))
    for k, v in kw.items():
        setattr(w, k, v)
    return w


class TestWorlds:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_deterministic(self, family):
        a, b = generate_world(5, WorldConfig(family=family)), generate_world(5, WorldConfig(family=family))
        assert a.obstacles == b.obstacles
        assert all(np.array_equal(p.exterior, q.exterior) for p, q in zip(a.vmap.polygons, b.vmap.polygons))

    def test_seed_changes_obstacles(self):
        assert generate_world(1).obstacles != generate_world(2).obstacles

    def test_straight_is_one_rectangle(self):
        w = generate_world(0, WorldConfig(family="straight"))
        assert len(w.vmap.polygons) == 1 and not w.vmap.polygons[0].holes
        poly = ShapelyPolygon(w.vmap.polygons[0].exterior)
        assert poly.is_valid and poly.area == pytest.approx(poly.minimum_rotated_rectangle.area, rel=1e-9)
        assert poly.area == pytest.approx(600.0 * 8.0, rel=1e-9)

    def test_roundabout_is_annulus_with_arms(self):
        w = generate_world(0, WorldConfig(family="roundabout"))
        assert len(w.vmap.polygons) == 1
        poly = w.vmap.polygons[0]
        assert len(poly.holes) == 1
        assert not w.on_road(np.array([[60.0, 0.0]]))[0]
        assert w.on_road(np.array([[60.0, 16.0], [0.0, 0.0], [60.0, -100.0]])).all()

    @pytest.mark.parametrize("family", FAMILIES)
    def test_static_obstacles_off_road(self, family):
        w = generate_world(3, WorldConfig(family=family))
        assert len(w.obstacles) == 8
        for ob in w.obstacles:
            assert not w.on_road(np.array([[ob.cx, ob.cy]]))[0]

    @pytest.mark.parametrize("family", FAMILIES)
    def test_traffic_follows_road(self, family):
        w = generate_world(3, WorldConfig(family=family))
        for v in w.vehicles:
            for t in np.linspace(0, 10, 21):
                p = v.trajectory.pose(t)
                assert w.on_road(np.array([[p.x, p.y]]))[0]
        for t in np.linspace(0, 10, 21):
            p = w.ego.pose(t)
            assert w.on_road(np.array([[p.x, p.y]]))[0]

    def test_invalid_family(self):
        with pytest.raises(ValueError):
            WorldConfig(family="motorway")


class TestScan:
    def test_ray_count(self):
        assert SensorSpec().n_rays == 57600
        scan = simulate_scan(empty_world(), Pose2D(0, 0, 0), spec=QUIET, seed=0)
        assert len(scan.points) == 57600

    def test_ground_ranges_are_analytic(self):
        scan = simulate_scan(empty_world(), Pose2D(0, 0, 0), spec=QUIET, seed=0)
        el = np.radians(np.asarray(QUIET.elevations_deg))
        for ring in range(32):
            sel = scan.points.ring == ring
            if el[ring] >= 0:
                assert not scan.points.valid[sel].any()
                continue
            expected = 1.8 / math.sin(abs(el[ring]))
            if expected > QUIET.max_range:
                assert not scan.points.valid[sel].any()
            else:
                assert np.allclose(scan.points.range[sel], expected, atol=1e-9)
                assert np.allclose(scan.points.z[sel], -1.8, atol=1e-9)

    def test_box_ahead(self):
        w = empty_world(obstacles=[Box(11.0, 0.0, 0.0, 2.0, 4.0, 2.0)])
        scan = simulate_scan(w, Pose2D(0, 0, 0), spec=QUIET, seed=0)
        i = 11 * 1800 + 0  # horizontal ring, first column fired at 0.1 degrees
        assert scan.points.elevation_deg[i] == 0.0
        assert scan.points.range[i] == pytest.approx(10.0 / math.cos(math.radians(0.1)), abs=1e-9)
        assert scan.truth.label[i] == OBSTACLE

    def test_box_with_noise(self):
        w = empty_world(obstacles=[Box(11.0, 0.0, 0.0, 2.0, 4.0, 2.0)])
        scan = simulate_scan(w, Pose2D(0, 0, 0), seed=4)
        assert abs(scan.points.range[11 * 1800] - 10.0) < 0.1

    def test_cylinder(self):
        w = empty_world(obstacles=[Cylinder(-10.0, 0.0, 1.0, 3.0)])
        scan = simulate_scan(w, Pose2D(0, 0, 0), spec=QUIET, seed=0)
        i = 11 * 1800 + 900  # azimuth 180.1 degrees
        assert scan.points.range[i] == pytest.approx(9.0, abs=1e-3)
        assert scan.truth.label[i] == OBSTACLE

    def test_full_dropout(self):
        scan = simulate_scan(generate_world(0), Pose2D(0, -2, 0), spec=SensorSpec(dropout=1.0), seed=0)
        assert not scan.points.valid.any()
        assert np.all(scan.truth.label == NO_RETURN)

    def test_pose_is_respected(self):
        # facing -x from the road centre, the near rings still land on the road
        scan = simulate_scan(empty_world(), Pose2D(0, 0, math.pi), spec=QUIET, seed=0)
        sel = scan.points.ring == 31
        assert scan.truth.is_road[sel].all()

    def test_same_seed_same_scan(self):
        w = generate_world(2)
        a = simulate_scan(w, Pose2D(0, -2, 0), seed=9)
        b = simulate_scan(w, Pose2D(0, -2, 0), seed=9)
        assert np.array_equal(a.points.xyz(), b.points.xyz()) and np.array_equal(a.truth.label, b.truth.label)

    def test_range_matches_coordinates(self):
        scan = simulate_scan(generate_world(2), Pose2D(0, -2, 0), seed=1)
        v = scan.points.valid
        assert np.allclose(np.linalg.norm(scan.points.xyz()[v], axis=1), scan.points.range[v], atol=1e-9)

    def test_truth_partition(self):
        scan = simulate_scan(generate_world(2), Pose2D(0, -2, 0), seed=1)
        t = scan.truth
        assert np.all(~t.is_road | t.is_ground)
        assert not np.any(t.is_obstacle & t.is_ground)
        assert np.array_equal(t.label != NO_RETURN, scan.points.valid)

    def test_perfect_masses(self):
        scan = simulate_scan(generate_world(2), Pose2D(0, -2, 0), seed=1)
        m = perfect_masses(scan.points, scan.truth)
        assert np.all(m[scan.truth.is_road] == (1, 0, 0))
        assert np.all(m[~scan.points.valid] == (0, 0, 1))

    def test_rolling_shutter_offsets_sensor(self):
        w = empty_world(obstacles=[Box(-9.0, 0.0, 0.0, 2.0, 4.0, 2.0)])
        still = simulate_scan(w, Pose2D(0, 0, 0), spec=QUIET, seed=0)
        moving = simulate_scan(w, Pose2D(0, 0, 0), spec=QUIET, seed=0, ego_speed=10.0)
        i = 11 * 1800 + 900  # fired half a revolution in: the sensor has moved 0.5 m
        assert moving.points.range[i] - still.points.range[i] == pytest.approx(0.5, abs=1e-3)


class TestSequence:
    def test_thirty_kmh_straight(self):
        seq = simulate_sequence(generate_world(7), 12.0, seed=7)
        assert len(seq) == 120
        steps = [math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(seq.poses, seq.poses[1:])]
        assert np.allclose(steps, 30 / 3.6 / 10, atol=1e-9)
        kinds = [m.kind for m in seq.measurements]
        assert kinds.count("speed_heading") == 120 and kinds.count("yaw_rate") == 1200

    def test_stationary_scans_repeat(self):
        w = generate_world(7)
        still = Trajectory(w.ego.path, 0.0, 150.0)
        seq = simulate_sequence(w, 0.3, spec=SensorSpec(range_noise=0.0), trajectory=still)
        a, b = seq.scan(0), seq.scan(2)
        # the oncoming vehicle moves, everything else is identical
        same = ~(a.truth.is_obstacle | b.truth.is_obstacle)
        assert np.array_equal(a.points.range[same], b.points.range[same])

    def test_deterministic(self):
        a = simulate_sequence(generate_world(7), 1.0, seed=3)
        b = simulate_sequence(generate_world(7), 1.0, seed=3)
        assert a.measurements == b.measurements
        assert np.array_equal(a.scan(4).points.xyz(), b.scan(4).points.xyz())

    def test_measurement_noise(self):
        seq = simulate_sequence(generate_world(7), 10.0, noise=OdoNoise(speed_std=0.1), seed=3)
        v = np.array([m.values[0] for m in seq.measurements if m.kind == "speed_heading"])
        assert abs(v.std() - 0.1) < 0.03 and abs(v.mean() - 30 / 3.6) < 0.05
