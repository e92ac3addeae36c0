import math

import numpy as np
import pytest

from conewalk import cone_linalg as cl
from conewalk.errors import DegenerateDataError, UnsupportedFieldError
from conewalk.limit_lab import (
    berry_esseen_scan,
    chi2_cdf,
    empirical_cov,
    fit_loglog,
    ks_2samp,
    ks_distance,
    mardia_tests,
    moment_identity_rhs,
    normal_cdf,
    normalize_clt,
    t_squared_limit,
)
from conewalk.radial_laws import RadialLaw, moments


class TestChi2Cdf:
    def test_at_zero(self):
        for p in (1, 2, 7):
            assert chi2_cdf(p, 0.0) == 0.0

    def test_two_dof_exponential(self):
        assert chi2_cdf(2, 2.0) == pytest.approx(1 - math.exp(-1), abs=1e-10)

    def test_one_dof_erf(self):
        assert chi2_cdf(1, 1.0) == pytest.approx(math.erf(1 / math.sqrt(2)), abs=1e-10)

    def test_invalid_dof(self):
        with pytest.raises(ValueError):
            chi2_cdf(0, 1.0)


class TestKsDistance:
    def test_single_point_against_uniform(self):
        assert ks_distance([0.5], lambda x: np.clip(x, 0, 1)) == pytest.approx(0.5)

    def test_exact_quantiles(self):
        n = 64
        sample = (np.arange(1, n + 1) - 0.5) / n
        assert ks_distance(sample, lambda x: np.clip(x, 0, 1)) == pytest.approx(1 / (2 * n))

    def test_normal_sample_within_dkw_band(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal(100000)
        assert ks_distance(x, normal_cdf) <= 0.0061

    def test_empty_sample(self):
        with pytest.raises(ValueError):
            ks_distance([], normal_cdf)

    def test_two_sample(self):
        rng = np.random.default_rng(43)
        d, p = ks_2samp(rng.standard_normal(5000), rng.standard_normal(5000))
        assert p > 1e-3


class TestNormalize:
    MD = moments(RadialLaw.two_point(1.0, 2.0, 0.5))

    def test_centering(self):
        out = normalize_clt("CLT2", np.array([100 * 2.5]), 100, 10**5, self.MD)
        assert out[0] == 0.0

    def test_clt1_hand_value(self):
        out = normalize_clt("CLT1", np.array([260.0]), 100, 4, self.MD)
        assert out[0] == pytest.approx(0.05656854249492375, abs=1e-12)

    def test_clt4_reduces_to_clt2_for_scalars(self):
        raw = np.array([240.0, 250.0, 266.0])
        a = normalize_clt("CLT2", raw, 100, 7.0, self.MD)
        b = normalize_clt("CLT4", raw, 100, 7.0, self.MD)
        assert np.array_equal(a, b)

    def test_matrix_kinds_vectorize(self):
        law = RadialLaw.point_mass(np.eye(2))
        md = moments(law)
        raw = np.stack([np.eye(2) * 50, np.eye(2) * 49])
        out = normalize_clt("CLT3", raw, 50, 100.0, md)
        assert out.shape == (2, 3)
        assert np.allclose(out[0], 0.0)

    def test_kind_shape_mismatch(self):
        with pytest.raises(ValueError):
            normalize_clt("CLT1", np.zeros((3, 2, 2)), 10, 5, self.MD)
        law = RadialLaw.point_mass(np.eye(2))
        with pytest.raises(ValueError):
            normalize_clt("CLT3", np.zeros(5), 10, 5, moments(law))
        with pytest.raises(ValueError):
            normalize_clt("CLT9", np.zeros(5), 10, 5, self.MD)


class TestTSquared:
    def test_identity_covariance(self):
        out = t_squared_limit(np.eye(2))
        assert np.allclose(out, 2 * np.eye(3), atol=1e-12)

    def test_rank_one(self):
        out = t_squared_limit(np.diag([1.0, 0.0]))
        expect = np.zeros((3, 3))
        expect[0, 0] = 2.0
        assert np.allclose(out, expect, atol=1e-12)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(5)
        g = rng.standard_normal((2, 2))
        s2 = g @ g.T
        out = t_squared_limit(s2)
        assert np.array_equal(out, out.T)

    def test_complex_refused(self):
        with pytest.raises(UnsupportedFieldError):
            t_squared_limit(np.eye(2), field=cl.COMPLEX)

    def test_wishart_oracle(self):
        # covariance of vec(w) for w = g g^T with g ~ N(0, sigma2)
        rng = np.random.default_rng(6)
        s2 = np.array([[1.0, 0.3], [0.3, 0.7]])
        root = cl.psd_sqrt(s2)
        g = rng.standard_normal((200000, 2)) @ root
        w = np.einsum("ni,nj->nij", g, g)
        vec = cl.vectorize_herm(w, cl.REAL)
        emp = np.cov(vec.T)
        assert np.max(np.abs(emp - t_squared_limit(s2))) <= 0.03


class TestMomentIdentity:
    MD = moments(RadialLaw.two_point(1.0, 2.0, 0.5))

    def test_single_step(self):
        assert moment_identity_rhs(1, 50, self.MD) == pytest.approx(
            self.MD.m4 - self.MD.sigma4)

    def test_hand_value(self):
        assert moment_identity_rhs(20, 50, self.MD) == pytest.approx(140.0)

    def test_large_p_limit(self):
        val = moment_identity_rhs(20, 1e15, self.MD)
        assert val == pytest.approx(20 * (self.MD.m4 - self.MD.sigma4), rel=1e-9)


class TestEmpiricalCov:
    def test_two_point_formula(self):
        x = np.array([1.0, 0.0, 2.0])
        y = np.array([0.0, 1.0, 0.0])
        mean, cov = empirical_cov(np.stack([x, y]))
        evals = np.linalg.eigvalsh(cov)
        assert evals[-1] == pytest.approx(np.sum((x - y) ** 2) / 2)
        assert np.allclose(evals[:-1], 0.0, atol=1e-12)

    def test_gaussian_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((100000, 3))
        mean, cov = empirical_cov(x)
        se = 4 * np.sqrt(2.0 / 100000)
        assert np.max(np.abs(cov - np.eye(3))) <= se + 0.002

    def test_shift_invariance(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((50, 3))
        _, cov1 = empirical_cov(x)
        _, cov2 = empirical_cov(x + np.array([5.0, -2.0, 11.0]))
        assert np.allclose(cov1, cov2, atol=1e-12)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            empirical_cov(np.zeros((1, 3)))


class TestMardia:
    def test_skewness_matches_pairwise_definition(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((300, 2)) ** 2
        res = mardia_tests(x)
        xc = x - x.mean(axis=0)
        s = xc.T @ xc / len(x)
        sinv = np.linalg.inv(s)
        b1 = np.mean((xc @ sinv @ xc.T) ** 3)
        assert res.skew_stat == pytest.approx(len(x) * b1 / 6, rel=1e-10)

    def test_null_calibration(self):
        rng = np.random.default_rng(10)
        rejections = 0
        trials = 200
        for _ in range(trials):
            res = mardia_tests(rng.standard_normal((1500, 3)))
            if res.skew_pvalue < 0.01:
                rejections += 1
        # expect about 1% rejections at level 0.01
        assert rejections <= 0.04 * trials

    def test_skewed_alternative(self):
        rng = np.random.default_rng(11)
        res = mardia_tests(np.exp(rng.standard_normal((20000, 3))))
        assert res.skew_pvalue < 1e-6

    def test_degenerate_data(self):
        with pytest.raises(DegenerateDataError):
            mardia_tests(np.ones((500, 2)))

    def test_sample_count_precondition(self):
        with pytest.raises(ValueError):
            mardia_tests(np.random.default_rng(0).standard_normal((30, 2)))


class TestRateFit:
    def test_exact_power_law(self):
        ns = [16, 32, 64, 128, 256]
        dists = [1.0 * n ** (-0.5) for n in ns]
        fit = fit_loglog(ns, dists, noise_floor=1e-6)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert all(fit.included)

    def test_noise_floor_exclusion(self):
        ns = [16, 32, 64, 128]
        dists = [0.5, 0.25, 0.001, 0.001]
        fit = fit_loglog(ns, dists, noise_floor=0.01)
        assert fit.included == (True, True, False, False)
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)

    def test_all_flagged_gives_none(self):
        fit = fit_loglog([16, 32, 64, 128], [1e-4] * 4, noise_floor=0.01)
        assert fit.slope is None

    def test_positive_distances_required(self):
        with pytest.raises(ValueError):
            fit_loglog([1, 2, 3, 4], [0.1, 0.0, 0.1, 0.1], 0.01)


class TestScan:
    def test_noise_floor_path(self):
        rng = np.random.default_rng(12)
        law = RadialLaw.two_point(1.0, 2.0, 0.5)
        fit = berry_esseen_scan(law, 3, [64, 128, 256, 512], 150, rng)
        assert fit.slope is None
        assert not any(fit.included)

    def test_skewed_law_has_negative_slope(self):
        rng = np.random.default_rng(13)
        law = RadialLaw.log_normal(0.0, 1.0)
        fit = berry_esseen_scan(law, 3, [16, 64, 256, 1024], 20000, rng,
                                method="polar")
        assert fit.slope is not None and fit.slope <= -0.3

    def test_grid_size_precondition(self):
        rng = np.random.default_rng(14)
        with pytest.raises(ValueError):
            berry_esseen_scan(RadialLaw.two_point(1, 2, 0.5), 3,
                              [16, 32, 64], 100, rng)

    def test_noise_floor_scales_with_replicates(self):
        # quadrupling the replicate count halves the 3/sqrt(reps) floor
        rng = np.random.default_rng(15)
        law = RadialLaw.two_point(1.0, 2.0, 0.5)
        f1 = berry_esseen_scan(law, 3, [8, 16, 32, 64], 100, rng)
        f2 = berry_esseen_scan(law, 3, [8, 16, 32, 64], 400, rng)
        assert f2.noise_floor == pytest.approx(f1.noise_floor / 2)
