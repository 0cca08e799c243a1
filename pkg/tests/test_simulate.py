import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from conicbayes.geometry import ConicType, angle_support, fd_to_quad, standard_to_fd
from conicbayes.simulate import (
    DatasetFormatError,
    NoisyDataset,
    SimSpec,
    load_dataset,
    save_dataset,
    sim2_type_schedule,
    simulate_sim1,
    simulate_sim2,
)


def quadrature_centroid_sim1(phi=math.pi):
    """Independent oracle: E[(u, v)] under Beta(3,3) standardized angles."""
    conic = standard_to_fd(ConicType.ELLIPSE, 50.0, 25.0, (250.0, 250.0), phi)

    def point(s, coord):
        t = 2 * math.pi * s - math.pi
        r = conic.l / (1 + conic.e * math.cos(t))
        if coord == 0:
            return (conic.h + r * math.cos(t + conic.phi)) * stats.beta.pdf(s, 3, 3)
        return (conic.k + r * math.sin(t + conic.phi)) * stats.beta.pdf(s, 3, 3)

    ex = integrate.quad(point, 0, 1, args=(0,), limit=200)[0]
    ey = integrate.quad(point, 0, 1, args=(1,), limit=200)[0]
    return np.array([ex, ey])


class TestSim1:
    def test_centroid_matches_quadrature_oracle(self):
        spec = SimSpec("sim1", n_points=200, n_datasets=1, sigma=2.0, seed=42)
        ds = simulate_sim1(spec)[0]
        ref = quadrature_centroid_sim1()
        assert np.linalg.norm(ds.points.mean(axis=0) - ref) < 3.0

    def test_noiseless_limit_on_true_ellipse(self):
        spec = SimSpec("sim1", n_points=50, n_datasets=1, sigma=1e-12, seed=1)
        ds = simulate_sim1(spec)[0]
        quad = fd_to_quad(ds.truth.conic)
        resid = quad.residual(ds.points[:, 0], ds.points[:, 1])
        assert np.max(np.abs(resid)) < 1e-9 * np.max(np.abs(quad.as_array()))

    def test_seed_determinism(self):
        spec = SimSpec("sim1", n_points=30, n_datasets=3, sigma=2.0, seed=9)
        a = simulate_sim1(spec)
        b = simulate_sim1(spec)
        for da, db in zip(a, b):
            assert np.array_equal(da.points, db.points)
            assert np.array_equal(da.truth.angles, db.truth.angles)

    def test_datasets_are_distinct(self):
        spec = SimSpec("sim1", n_points=30, n_datasets=2, sigma=2.0, seed=9)
        a, b = simulate_sim1(spec)
        assert not np.array_equal(a.points, b.points)

    def test_truth_geometry(self):
        spec = SimSpec("sim1", n_points=10, n_datasets=1, sigma=2.0, seed=0)
        conic = simulate_sim1(spec)[0].truth.conic
        # semi-major 50, semi-minor 25 => e = sqrt(1 - 25^2/50^2), l = 25^2/50
        assert conic.e == pytest.approx(math.sqrt(0.75))
        assert conic.l == pytest.approx(12.5)


class TestSim2:
    def test_hyperbola_eccentricity_formula(self):
        conic = standard_to_fd(ConicType.HYPERBOLA, 50.0, 25.0, (250, 250), 0.0)
        assert conic.e == pytest.approx(math.sqrt(1 + 0.25), abs=1e-4)
        assert conic.e == pytest.approx(1.1180, abs=1e-4)

    def test_balanced_schedule_300(self):
        schedule = sim2_type_schedule(300, "random-balanced")
        for kind in (ConicType.ELLIPSE, ConicType.PARABOLA, ConicType.HYPERBOLA):
            assert schedule.count(kind) == 100

    def test_noiseless_membership(self):
        spec = SimSpec("sim2", n_points=40, n_datasets=6, sigma=1e-12, seed=3)
        for ds in simulate_sim2(spec):
            quad = fd_to_quad(ds.truth.conic)
            resid = quad.residual(ds.points[:, 0], ds.points[:, 1])
            assert np.max(np.abs(resid)) < 1e-9 * np.max(np.abs(quad.as_array()))

    def test_angles_inside_support(self):
        spec = SimSpec("sim2", n_points=100, n_datasets=9, sigma=2.0, seed=5)
        for ds in simulate_sim2(spec):
            r_sup = angle_support(ds.truth.conic.e)
            assert np.all(np.abs(ds.truth.angles) < r_sup)

    def test_type_specific_angle_ranges(self):
        spec = SimSpec("sim2", n_points=200, n_datasets=3, sigma=2.0, seed=8)
        by_type = {ds.truth.conic.conic_type: ds for ds in simulate_sim2(spec)}
        assert np.all(np.abs(by_type[ConicType.ELLIPSE].truth.angles) < math.pi / 2)
        assert np.all(np.abs(by_type[ConicType.PARABOLA].truth.angles) < 2.0)

    def test_single_type_run(self):
        spec = SimSpec("sim2", n_points=20, n_datasets=4, sigma=2.0, seed=2, conic_type="parabola")
        for ds in simulate_sim2(spec):
            assert ds.truth.conic.e == 1.0

    def test_noise_calibration(self):
        # sd of (x - u) over >= 1e4 draws should match sigma within 3 MC SEs
        spec = SimSpec("sim2", n_points=100, n_datasets=120, sigma=2.0, seed=77)
        residuals = []
        for ds in simulate_sim2(spec):
            from conicbayes.geometry import conic_points

            clean = conic_points(ds.truth.conic, ds.truth.angles)
            residuals.append((ds.points - clean).ravel())
        res = np.concatenate(residuals)
        assert len(res) >= 2e4
        se = spec.sigma / math.sqrt(2 * len(res))
        assert abs(res.std(ddof=1) - spec.sigma) < 3 * se


class TestSimSpecValidation:
    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            SimSpec("sim1", n_points=4, n_datasets=1)

    def test_rejects_zero_sigma(self):
        with pytest.raises(ValueError):
            SimSpec("sim1", n_points=10, n_datasets=1, sigma=0.0)

    def test_rejects_unknown_protocol(self):
        with pytest.raises(ValueError):
            SimSpec("sim3", n_points=10, n_datasets=1)

    def test_rejects_unknown_type(self):
        with pytest.raises(ValueError):
            SimSpec("sim2", n_points=10, n_datasets=1, conic_type="oval")


class TestDatasetIO:
    def test_json_round_trip(self, tmp_path):
        spec = SimSpec("sim2", n_points=12, n_datasets=1, sigma=2.0, seed=4)
        ds = simulate_sim2(spec)[0]
        path = tmp_path / "ds.json"
        save_dataset(path, ds)
        back = load_dataset(path)
        assert np.array_equal(back.points, ds.points)
        assert back.seed == ds.seed
        assert back.truth.conic == ds.truth.conic
        assert np.array_equal(back.truth.angles, ds.truth.angles)
        assert back.truth.sigma == ds.truth.sigma

    def test_truth_block_optional(self, tmp_path):
        path = tmp_path / "bare.json"
        path.write_text(json.dumps({"points": [[0.0, 1.0], [2.0, 3.0]], "truth": None, "seed": 7}))
        ds = load_dataset(path)
        assert ds.truth is None
        assert ds.seed == 7

    def test_nan_coordinate_rejected(self, tmp_path):
        path = tmp_path / "nan.json"
        path.write_text('{"points": [[0.0, NaN]], "truth": null, "seed": 0}')
        with pytest.raises(DatasetFormatError):
            load_dataset(path)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"points": [[0, 1],')
        with pytest.raises(DatasetFormatError) as err:
            load_dataset(path)
        assert "line" in str(err.value)

    def test_csv_round_trip_points_only(self, tmp_path):
        ds = NoisyDataset(np.array([[1.5, 2.5], [3.25, -4.75]]), None, 0)
        path = tmp_path / "ds.csv"
        save_dataset(path, ds)
        back = load_dataset(path)
        assert np.array_equal(back.points, ds.points)
        assert back.truth is None

    def test_csv_bad_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1.0,oops\n")
        with pytest.raises(DatasetFormatError):
            load_dataset(path)

    def test_deterministic_bytes_on_disk(self, tmp_path):
        spec = SimSpec("sim1", n_points=20, n_datasets=1, sigma=2.0, seed=11)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_dataset(p1, simulate_sim1(spec)[0])
        save_dataset(p2, simulate_sim1(spec)[0])
        assert p1.read_bytes() == p2.read_bytes()
