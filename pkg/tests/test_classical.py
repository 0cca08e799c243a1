import math

import numpy as np
import pytest

from conicbayes import classical as cf
from conicbayes.geometry import (
    ConicFD,
    ConicType,
    angle_support,
    canonical_fd,
    conic_points,
    fd_to_quad,
    fd_to_standard,
    nearest_point_angles,
    quad_to_fd,
    standard_to_fd,
    to_standard_points,
)
from conicbayes.simulate import SimSpec, simulate_sim1


def noiseless_points(conic, n, rng, frac=0.8):
    r_sup = angle_support(conic.e)
    ts = rng.uniform(-frac * r_sup, frac * r_sup, n)
    return conic_points(conic, ts)


def random_conic(rng, kind):
    a = rng.uniform(30.0, 70.0)
    b = None if kind is ConicType.PARABOLA else rng.uniform(15.0, 0.85 * a)
    center = rng.uniform(200.0, 300.0, size=2)
    phi = rng.uniform(-math.pi, math.pi)
    return standard_to_fd(kind, a, b, center, phi)


def rel_err(estimate: ConicFD, truth: ConicFD) -> float:
    est, tru = canonical_fd(estimate).as_array(), canonical_fd(truth).as_array()
    return float(np.max(np.abs(est - tru) / np.maximum(1.0, np.abs(tru))))


class TestPseudoInverse:
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(1)
        conic = random_conic(rng, ConicType.ELLIPSE)
        pts = noiseless_points(conic, 60, rng)
        quad = cf.fit_pseudo_inverse(pts)
        truth = fd_to_quad(conic)
        diff = min(
            np.max(np.abs(quad.as_array() - truth.as_array())),
            np.max(np.abs(quad.as_array() + truth.as_array())),
        )
        assert diff < 1e-8
        scale = np.max(np.abs(quad.as_array()))
        assert np.max(np.abs(quad.residual(pts[:, 0], pts[:, 1]))) < 1e-8 * scale

    def test_five_points_rejected(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(5, 2))
        with pytest.raises(cf.RankDeficiencyError):
            cf.fit_pseudo_inverse(pts)

    def test_collinear_points_rejected(self):
        x = np.linspace(0, 10, 30)
        pts = np.column_stack([x, 2 * x + 1])
        with pytest.raises(cf.RankDeficiencyError):
            cf.fit_pseudo_inverse(pts)

    def test_small_noise_characterization(self):
        # at sigma = 0.2 the algebraic estimator is regular on the concentrated
        # design; band frozen from 40-seed oracle runs (mean 2a ~ 100.5 +- 0.5)
        est = []
        for seed in range(20):
            ds = simulate_sim1(SimSpec("sim1", 200, 1, sigma=0.2, seed=seed))[0]
            std = fd_to_standard(quad_to_fd(cf.fit_pseudo_inverse(ds.points)))
            est.append(2 * std.a)
        assert abs(float(np.mean(est)) - 100.0) < 2.0


class TestLemmaRegression:
    def test_standard_ellipse_coefficients(self):
        a, b = 5.0, 3.0
        t = np.linspace(0.1, 2 * math.pi, 40)
        pts = np.column_stack([a * np.cos(t), b * np.sin(t)])
        reg = cf.fit_lemma_regression(pts, ConicType.ELLIPSE)
        b0, b1, b2, b3 = reg.beta
        assert b0 == pytest.approx(b * b, abs=1e-8)
        assert b1 == pytest.approx(0.0, abs=1e-8)
        assert b2 == pytest.approx(-(b * b) / (a * a), abs=1e-10)
        assert b3 == pytest.approx(0.0, abs=1e-8)
        assert reg.residual_ss == pytest.approx(0.0, abs=1e-12)

    def test_standard_parabola_coefficients(self):
        a = 2.5
        v = np.linspace(-4, 4, 30)
        pts = np.column_stack([-(v * v) / (4 * a), v])  # v^2 = -4 a u
        reg = cf.fit_lemma_regression(pts, ConicType.PARABOLA)
        b0, b1, b2 = reg.beta
        assert b1 == pytest.approx(-4 * a, abs=1e-9)
        assert b2 == pytest.approx(0.0, abs=1e-9)
        assert b0 == pytest.approx(0.0, abs=1e-8)

    def test_rotated_ellipse_round_trip(self):
        rng = np.random.default_rng(3)
        conic = random_conic(rng, ConicType.ELLIPSE)
        pts = noiseless_points(conic, 50, rng, frac=0.95)
        phi_axis = fd_to_standard(conic).phi
        rotated = to_standard_points(pts, (0.0, 0.0), phi_axis)
        reg = cf.fit_lemma_regression(rotated, ConicType.ELLIPSE)
        fitted = cf.lemma_to_conic(reg, ConicType.ELLIPSE, phi_axis)
        assert rel_err(fitted, conic) < 1e-6

    def test_hyperbola_synthetic_beta_round_trip(self):
        # forward-compute regression coefficients from (a, b, c*) with the
        # delta = -1 identities, then invert
        a, b = 4.0, 2.0
        c1s, c2s = 1.5, -0.75
        delta = -1.0
        beta = np.array(
            [
                -c2s * c2s - delta * c1s * c1s * b * b / (a * a) + delta * b * b,
                2 * delta * c1s * b * b / (a * a),
                -delta * b * b / (a * a),
                2 * c2s,
            ]
        )
        fitted = cf.lemma_to_conic(cf.LemmaRegression(beta, 0.0), ConicType.HYPERBOLA, 0.0)
        std = fd_to_standard(fitted)
        assert std.a == pytest.approx(a)
        assert std.b == pytest.approx(b)
        assert std.center == pytest.approx((c1s, c2s))

    def test_inadmissible_ellipse_sign(self):
        beta = np.array([1.0, 0.0, +0.5, 0.0])  # b2 > 0 contradicts an ellipse
        with pytest.raises(cf.InadmissibleCoefficientsError):
            cf.lemma_to_conic(cf.LemmaRegression(beta, 0.0), ConicType.ELLIPSE, 0.0)

    def test_inadmissible_parabola_sign(self):
        beta = np.array([0.0, +2.0, 0.0])  # implies a < 0
        with pytest.raises(cf.InadmissibleCoefficientsError):
            cf.lemma_to_conic(cf.LemmaRegression(beta, 0.0), ConicType.PARABOLA, 0.0)

    def test_too_few_points(self):
        pts = np.random.default_rng(0).normal(size=(4, 2))
        with pytest.raises(cf.RankDeficiencyError):
            cf.fit_lemma_regression(pts, ConicType.ELLIPSE)

    def test_scale_consistency(self):
        rng = np.random.default_rng(5)
        conic = random_conic(rng, ConicType.ELLIPSE)
        pts = noiseless_points(conic, 40, rng)
        phi_axis = fd_to_standard(conic).phi
        for s in (2.0, 0.5):
            rot = to_standard_points(pts * s, (0.0, 0.0), phi_axis)
            reg = cf.fit_lemma_regression(rot, ConicType.ELLIPSE)
            fitted = cf.lemma_to_conic(reg, ConicType.ELLIPSE, phi_axis)
            std, std0 = fd_to_standard(fitted), fd_to_standard(conic)
            assert std.a == pytest.approx(s * std0.a, rel=1e-9)
            assert std.b == pytest.approx(s * std0.b, rel=1e-9)
            assert std.center[0] == pytest.approx(s * std0.center[0], rel=1e-9)


class TestEstimateAngles:
    def test_noiseless_sigma_floor(self):
        rng = np.random.default_rng(7)
        conic = random_conic(rng, ConicType.ELLIPSE)
        pts = noiseless_points(conic, 40, rng)
        _, sigma2, loglik = cf.estimate_angles(pts, conic)
        floor = cf.SIGMA2_FLOOR_REL * cf.data_scale(pts) ** 2
        assert sigma2 == pytest.approx(floor)
        assert math.isfinite(loglik)

    def test_single_datum_at_circle_focus(self):
        conic = ConicFD(3.0, 1.0, 0.0, 2.0, 0.0)
        _, sigma2, _ = cf.estimate_angles(np.array([[3.0, 1.0]]), conic)
        assert sigma2 == pytest.approx(conic.l**2 / 2)

    def test_profile_variance_halves_sigma2(self):
        # oracle: nearest-point projection absorbs the tangential noise
        # component, so RSS/(2n) estimates sigma^2/2, not sigma^2
        rng = np.random.default_rng(11)
        conic = standard_to_fd(ConicType.ELLIPSE, 50, 25, (250, 250), 0.4)
        n, sigma = 4000, 1.0
        ts = rng.uniform(-math.pi, math.pi, n)
        pts = conic_points(conic, ts) + rng.normal(0, sigma, (n, 2))
        _, sigma2, _ = cf.estimate_angles(pts, conic)
        se = (sigma**2 / 2) * math.sqrt(2.0 / n)
        assert abs(sigma2 - sigma**2 / 2) < 5 * se + 0.01

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(13)
        conic = random_conic(rng, ConicType.ELLIPSE)
        pts = noiseless_points(conic, 20, rng) + rng.normal(0, 1.0, (20, 2))
        t_hat, _, _ = cf.estimate_angles(pts, conic)
        eps = 1e-6
        d2 = lambda t: np.sum((pts - conic_points(conic, t)) ** 2, axis=1)
        deriv = (d2(t_hat + eps) - d2(t_hat - eps)) / (2 * eps)
        scale = np.maximum(d2(t_hat), 1.0)
        assert np.max(np.abs(deriv) / scale) < 1e-4

    def test_loglik_matches_direct_formula(self):
        rng = np.random.default_rng(17)
        conic = random_conic(rng, ConicType.HYPERBOLA)
        pts = noiseless_points(conic, 25, rng) + rng.normal(0, 2.0, (25, 2))
        t_hat, sigma2, loglik = cf.estimate_angles(pts, conic)
        resid = pts - conic_points(conic, t_hat)
        direct = sum(
            -0.5 * math.log(2 * math.pi * sigma2) - r * r / (2 * sigma2)
            for r in resid.ravel()
        )
        assert loglik == pytest.approx(direct, rel=1e-10)


class TestInitialize:
    @pytest.mark.parametrize("kind", [ConicType.ELLIPSE, ConicType.HYPERBOLA, ConicType.PARABOLA])
    def test_noiseless_recovery(self, kind):
        rng = np.random.default_rng(19)
        for _ in range(10):
            conic = random_conic(rng, kind)
            pts = noiseless_points(conic, 60, rng)
            est = cf.initialize(pts)
            assert est.kind is kind
            assert rel_err(est.conic, conic) < 1e-4

    def test_likelihood_dominance(self):
        rng = np.random.default_rng(23)
        ds = simulate_sim1(SimSpec("sim1", 100, 1, sigma=2.0, seed=3))[0]
        est = cf.initialize(ds.points)
        quad = cf.fit_pseudo_inverse(ds.points)
        for cand in cf.candidate_axis_angles(quad):
            rotated = to_standard_points(ds.points, (0.0, 0.0), cand)
            for kind in cf.INIT_TYPES:
                try:
                    reg = cf.fit_lemma_regression(rotated, kind)
                    conic = cf.lemma_to_conic(reg, kind, cand)
                except (cf.InadmissibleCoefficientsError, cf.RankDeficiencyError):
                    continue
                _, _, loglik = cf.estimate_angles(ds.points, conic)
                assert est.loglik >= loglik - 1e-9

    def test_candidate_angles_wrapped(self):
        quad = fd_to_quad(standard_to_fd(ConicType.ELLIPSE, 5, 3, (0, 0), math.pi / 4))
        cands = cf.candidate_axis_angles(quad)
        assert len(cands) == 4
        assert all(-math.pi < c <= math.pi for c in cands)
        assert any(abs(c - math.pi / 4) < 1e-6 for c in cands)
        assert any(abs(c + 3 * math.pi / 4) < 1e-6 for c in cands)

    def test_vertical_parabola_recovered(self):
        rng = np.random.default_rng(29)
        conic = standard_to_fd(ConicType.PARABOLA, 20.0, None, (250, 250), math.pi / 2)
        pts = noiseless_points(conic, 60, rng, frac=0.6)
        est = cf.initialize(pts)
        assert est.kind is ConicType.PARABOLA
        assert rel_err(est.conic, conic) < 1e-4

    def test_parabola_data_lands_near_unit_eccentricity(self):
        # 20-seed oracle on parabola-style partial data: the winning branch is
        # labeled parabola only when the nested 4-parameter fits lose by
        # chance (7/20 here), but the fitted eccentricity is within 0.1 of 1
        # in every seed, which is the property the sampler start needs
        from conicbayes.simulate import simulate_sim2

        parabola_labels = 0
        n_seeds = 20
        for seed in range(n_seeds):
            spec = SimSpec("sim2", 100, 1, sigma=2.0, seed=seed, conic_type="parabola")
            ds = simulate_sim2(spec)[0]
            est = cf.initialize(ds.points)
            parabola_labels += est.kind is ConicType.PARABOLA
            assert abs(est.conic.e - 1.0) < 0.1
        assert parabola_labels >= 3

    def test_too_few_points(self):
        with pytest.raises(cf.RankDeficiencyError):
            cf.initialize(np.zeros((5, 2)))

    def test_circle_restricted(self):
        rng = np.random.default_rng(31)
        conic = ConicFD(250.0, 250.0, 0.0, 40.0, 0.0)
        pts = noiseless_points(conic, 50, rng) + rng.normal(0, 0.5, (50, 2))
        est = cf.initialize(pts, allowed_types=(ConicType.CIRCLE,))
        assert est.kind is ConicType.CIRCLE
        assert est.conic.e == 0.0
        assert est.conic.l == pytest.approx(40.0, abs=0.5)


class TestOrthogonalDistance:
    def test_noiseless_start_at_truth(self):
        rng = np.random.default_rng(37)
        conic = random_conic(rng, ConicType.ELLIPSE)
        pts = noiseless_points(conic, 40, rng)
        res = cf.fit_orthogonal_distance(pts, ConicType.ELLIPSE, conic)
        assert res.converged
        assert rel_err(res.conic, conic) < 1e-9
        assert res.objective == pytest.approx(0.0, abs=1e-15)

    def test_objective_improves_from_perturbed_start(self):
        rng = np.random.default_rng(41)
        conic = random_conic(rng, ConicType.ELLIPSE)
        pts = noiseless_points(conic, 60, rng) + rng.normal(0, 0.5, (60, 2))
        std = fd_to_standard(conic)
        start = standard_to_fd(
            ConicType.ELLIPSE, std.a * 1.2, std.b * 0.9,
            (std.center[0] + 3, std.center[1] - 2), std.phi + 0.05,
        )
        res = cf.fit_orthogonal_distance(pts, ConicType.ELLIPSE, start)
        assert res.objective <= cf._odr_objective(pts, start) + 1e-12
        assert res.objective <= cf._odr_objective(pts, conic) + 1e-9

    def test_recovers_truth_small_noise(self):
        rng = np.random.default_rng(43)
        conic = random_conic(rng, ConicType.PARABOLA)
        r_sup = angle_support(conic.e)
        ts = rng.uniform(-0.6 * r_sup, 0.6 * r_sup, 80)
        pts = conic_points(conic, ts) + rng.normal(0, 0.05, (80, 2))
        init = cf.initialize(pts)
        res = cf.fit_orthogonal_distance(pts, ConicType.PARABOLA, init.conic)
        assert rel_err(res.conic, conic) < 5e-3
