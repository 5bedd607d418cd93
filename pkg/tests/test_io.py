import numpy as np
import pytest

from evroad import io
from evroad.geometry import Pose2D
from evroad.glr import TrainConfig, train_glr
from evroad.grid import EvidentialGrid, GridConfig
from evroad.labels import ScanLabels
from evroad.scan import PointCloud, project_to_range_image
from evroad.sim import WorldConfig, generate_world, simulate_scan

SMALL = GridConfig(length=4.0, width=2.0)


@pytest.fixture
def cloud(rng):
    xyz = rng.normal(0, 20, (300, 3))
    valid = rng.random(300) < 0.9
    return PointCloud.from_xyz(xyz, rng.integers(0, 32, 300), rng.uniform(0, 1, 300), valid)


def test_points_round_trip(tmp_path, cloud):
    io.write_points_csv(tmp_path / "p.csv", cloud)
    back = io.read_points_csv(tmp_path / "p.csv")
    for name in io.POINT_COLUMNS:
        assert np.array_equal(getattr(back, name), getattr(cloud, name))
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == ",".join(io.POINT_COLUMNS)


def test_range_image_round_trip(tmp_path, cloud):
    img = project_to_range_image(cloud)
    io.write_range_image(tmp_path / "r.bin", img)
    header = (tmp_path / "r.bin").read_bytes().split(b"\n", 1)[0].split()
    assert len(header) == 8 and header[:3] == [b"32", b"1800", b"8"]
    back = io.read_range_image(tmp_path / "r.bin")
    assert np.array_equal(back.data, img.data.astype(np.float32).astype(float))
    assert np.array_equal(back.validity, img.validity)


def test_range_image_truncated(tmp_path, cloud):
    io.write_range_image(tmp_path / "r.bin", project_to_range_image(cloud))
    raw = (tmp_path / "r.bin").read_bytes()
    (tmp_path / "r.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        io.read_range_image(tmp_path / "r.bin")


@pytest.mark.parametrize("family", ["straight", "roundabout"])
def test_world_round_trip(tmp_path, family):
    w = generate_world(4, WorldConfig(family=family))
    io.write_geojson(tmp_path / "map.geojson", w.vmap)
    io.write_world(tmp_path / "world.json", w)
    back = io.read_world(tmp_path / "world.json", tmp_path / "map.geojson")
    assert back.obstacles == w.obstacles
    assert len(back.vmap.polygons) == len(w.vmap.polygons)
    assert back.ego.pose(3.0) == w.ego.pose(3.0)
    assert back.vehicles[0].box_at(2.0) == w.vehicles[0].box_at(2.0)
    a = simulate_scan(w, w.ego.pose(1.0), 1.0, seed=3)
    b = simulate_scan(back, back.ego.pose(1.0), 1.0, seed=3)
    assert np.array_equal(a.truth.label, b.truth.label)


def test_masses_round_trip(tmp_path, rng):
    m = rng.dirichlet(np.ones(3), 50)
    io.write_masses_csv(tmp_path / "m.csv", m)
    assert np.array_equal(io.read_masses_csv(tmp_path / "m.csv"), m)


def test_masses_rejects_bad_rows(tmp_path):
    (tmp_path / "m.csv").write_text("m_R,m_notR,m_omega\n0.5,0.5,0.5\n")
    with pytest.raises(ValueError):
        io.read_masses_csv(tmp_path / "m.csv")


def test_glr_params_round_trip(tmp_path, rng):
    x = rng.normal(0, 1, (200, 3))
    y = (x[:, 0] > 0).astype(float)
    clf = train_glr(x, y, TrainConfig(hidden=5, max_epochs=50), ("a", "b", "c")).classifier
    io.write_glr_params(tmp_path / "p.txt", clf)
    back = io.read_glr_params(tmp_path / "p.txt")
    assert back.feature_names == ("a", "b", "c")
    assert np.array_equal(back.predict_prob(x), clf.predict_prob(x))
    assert np.array_equal(back.masses(x), clf.masses(x))


def test_glr_params_incomplete(tmp_path):
    (tmp_path / "p.txt").write_text("features,a\nbetas,1,1,0.5\n")
    with pytest.raises(ValueError):
        io.read_glr_params(tmp_path / "p.txt")


def test_grid_round_trip(tmp_path, rng):
    g = EvidentialGrid.vacuous(SMALL, Pose2D(1.0, 2.0, 0.3), 4.5)
    obs = rng.random(SMALL.shape) < 0.4
    g.mass[obs] = rng.dirichlet(np.ones(3), obs.sum())
    g.count[obs] = rng.integers(1, 9, obs.sum())
    io.write_grid_csv(tmp_path / "g.csv", g)
    io.write_grid_meta(tmp_path / "g.meta.txt", g, frame=12)
    meta = io.read_grid_meta(tmp_path / "g.meta.txt")
    back = io.read_grid_csv(tmp_path / "g.csv", io.meta_config(meta))
    assert np.array_equal(back.mass, g.mass) and np.array_equal(back.count, g.count)
    assert io.meta_pose(meta) == Pose2D(1.0, 2.0, 0.3) and meta["frame"] == "12"


def test_pgm(tmp_path):
    g = EvidentialGrid.vacuous(SMALL)
    g.mass[0, 0] = (1, 0, 0)
    io.write_pgm(tmp_path / "g.pgm", g)
    img = io.read_pgm(tmp_path / "g.pgm")
    assert img.shape == SMALL.shape
    # forward is up and left is left, so the rear-right corner cell sits bottom right
    assert img[-1, -1] == 255 and img.sum() == 255


def test_clusters_round_trip(tmp_path, rng):
    c = rng.integers(0, 4, (20, 10))
    io.write_clusters_csv(tmp_path / "c.csv", c)
    assert np.array_equal(io.read_clusters_csv(tmp_path / "c.csv"), c)


def test_metrics_and_labels(tmp_path):
    rows = [(0, 0.9, 0.01, 0.95), (1, 0.8, 0.02, float("nan"))]
    io.write_metrics_csv(tmp_path / "m.csv", rows)
    back = io.read_metrics_csv(tmp_path / "m.csv")
    assert back[0] == rows[0] and np.isnan(back[1][3])
    lab = ScanLabels(np.array([0.0, 0.25, 1.0]), np.array([False, True, True]), True, False)
    io.write_labels_csv(tmp_path / "l.csv", lab)
    p, g = io.read_labels_csv(tmp_path / "l.csv")
    assert np.array_equal(p, lab.p_road) and np.array_equal(g, lab.is_ground)


def test_table_round_trip(tmp_path):
    io.write_table(tmp_path / "t.csv", ("a", "b"), [[1, 0.1], [2, 1 / 3]])
    t = io.read_table(tmp_path / "t.csv")
    assert list(t["a"]) == [1, 2] and t["b"][1] == 1 / 3
