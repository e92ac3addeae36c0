import math

import numpy as np
import pytest

from conewalk import cone_linalg as cl
from conewalk.bessel import (
    BesselParam,
    BesselWalkConfig,
    ClippedQuadraticForm,
    bessel_character_1d,
    convolve_points,
    convolve_points_scalar,
    kappa_mu,
    kappa_quadrature_1d,
    paired_composition_diffs,
    root_lipschitz_gap,
    run_bessel_walk,
    run_bessel_walks,
    sample_contraction,
    semigroup_convolve,
)
from conewalk.errors import SamplerStallError, StableRangeError
from conewalk.limit_lab import ks_2samp, ks_distance
from conewalk.orbit_sampler import GroupWalkConfig, run_group_walks
from conewalk.radial_laws import RadialLaw, law_from_spec, moments

MIX2 = RadialLaw.finite_mixture(
    [np.diag([1.0, 0.5]), np.diag([0.5, 1.0])], [0.5, 0.5])


class TestParam:
    def test_rho_values(self):
        assert BesselParam(3.0, 1, 1).rho == pytest.approx(1.5)
        assert BesselParam(5.0, 2, 1).rho == pytest.approx(2.5)
        assert BesselParam(5.0, 2, 2).rho == pytest.approx(4.0)

    def test_existence_range(self):
        BesselParam(0.51, 1, 1)  # rho - 1 = 0.5
        with pytest.raises(ValueError):
            BesselParam(0.5, 1, 1)
        with pytest.raises(ValueError):
            BesselParam(3.0, 2, 3)

    def test_lemma_range_gate(self):
        BesselParam(3.0, 1, 1).require_lemma_range()
        with pytest.raises(ValueError):
            BesselParam(2.9, 1, 1).require_lemma_range()


class TestContractionSampler:
    def test_uniform_case(self):
        # mu = rho makes the density flat on (-1, 1)
        rng = np.random.default_rng(1)
        n = 100000
        v = sample_contraction(BesselParam(1.5, 1, 1), rng, n)[:, 0, 0]
        assert np.all(np.abs(v) < 1)
        assert abs(v.mean()) <= 3 * np.sqrt(1 / 3 / n)
        var_se = np.std(v**2) / np.sqrt(n)
        assert abs(v.var() - 1 / 3) <= 3 * var_se

    def test_sign_symmetry_matrix_case(self):
        rng = np.random.default_rng(2)
        n = 40000
        v = sample_contraction(BesselParam(6.0, 2, 1), rng, n)
        se = np.max(np.std(v, axis=0)) / np.sqrt(n)
        assert np.max(np.abs(v.mean(axis=0))) <= 4 * se

    def test_beta_marginal(self):
        # v^2 is Beta(1/2, mu - 1/2); quadrature CDF of the same density
        from conewalk.experiments import _beta_half_cdf

        rng = np.random.default_rng(3)
        n = 30000
        v = sample_contraction(BesselParam(5.0, 1, 1), rng, n)[:, 0, 0]
        ks = ks_distance(v**2, _beta_half_cdf(5.0))
        assert ks <= 0.011

    def test_below_rho_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            sample_contraction(BesselParam(1.2, 1, 1), rng, 4)

    def test_stall_guard(self):
        rng = np.random.default_rng(5)
        with pytest.raises(SamplerStallError):
            sample_contraction(BesselParam(4.0, 1, 1), rng, 10,
                               _stall_window=1000, _stall_rate=2.0)

    def test_gaussian_branch_boundary(self):
        rng = np.random.default_rng(6)
        v = sample_contraction(BesselParam(2.0, 1, 1), rng, 1000)
        assert np.all(np.abs(v) < 1)


class TestConvolve:
    def test_zero_left_argument_collapses(self):
        rng = np.random.default_rng(7)
        param = BesselParam(4.0, 2, 1)
        s = np.array([[1.0, 0.3], [0.3, 0.7]])
        t = convolve_points(np.zeros((2, 2)), s, param, rng, 200)
        assert np.max(cl.frob_norm(t - s)) <= 1e-9

    def test_unit_points_second_moment(self):
        # E[t^2] = 2 exactly when r = s = 1, any index
        rng = np.random.default_rng(8)
        n = 100000
        t = convolve_points_scalar(1.0, 1.0, BesselParam(4.0, 1, 1), rng, n)
        se = np.std(t**2) / np.sqrt(n)
        assert abs(np.mean(t**2) - 2.0) <= 3 * se

    def test_group_case_against_sphere_walk(self):
        # p = 3 lift: |x + Y| for fixed unit x and Y uniform on the sphere
        rng = np.random.default_rng(9)
        n = 50000
        t = convolve_points_scalar(1.0, 1.0, BesselParam(1.5, 1, 1), rng, n)
        g = np.random.default_rng(10).standard_normal((n, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        ref = np.sqrt((1 + g[:, 0]) ** 2 + g[:, 1] ** 2 + g[:, 2] ** 2)
        _, pvalue = ks_2samp(t, ref)
        assert pvalue >= 1e-3

    def test_support_bound_and_commutativity_complex(self):
        rng = np.random.default_rng(11)
        param = BesselParam(6.0, 2, 2)
        r = np.array([[1.0, 0.2 + 0.1j], [0.2 - 0.1j, 0.6]])
        s = np.array([[0.4, 0.0], [0.0, 1.1]])
        t_rs = convolve_points(r, s, param, rng, 20000)
        bound = cl.frob_norm(r) + cl.frob_norm(s)
        assert np.max(cl.frob_norm(t_rs)) <= bound + 1e-8
        t_sr = convolve_points(s, r, param, rng, 20000)
        _, pvalue = ks_2samp(cl.trace_herm(t_rs @ t_rs),
                             cl.trace_herm(t_sr @ t_sr))
        assert pvalue >= 1e-3

    def test_m1_subadditivity(self):
        rng = np.random.default_rng(12)
        law = RadialLaw.two_point(1.0, 2.0, 0.5)
        md = moments(law)
        n = 50000
        s1 = law.sample_scalar(rng, n)
        s2 = law.sample_scalar(rng, n)
        param = BesselParam(3.0, 1, 1)
        from conewalk.bessel import _sample_contraction_flat

        v = _sample_contraction_flat(param, rng, n, 10**7, 1e-6)
        t = np.sqrt(np.maximum(s1**2 + s2**2 + 2 * s1 * s2 * v, 0.0))
        se = np.std(t) / np.sqrt(n)
        assert np.mean(t) <= 2 * md.m1 + 4 * se


class TestSemigroup:
    def test_pythagorean(self):
        assert semigroup_convolve(np.array(3.0), np.array(4.0)) == pytest.approx(5.0)

    def test_identity_element(self):
        s = np.array([[1.0, 0.2], [0.2, 0.5]])
        assert np.allclose(semigroup_convolve(np.zeros((2, 2)), s), s, atol=1e-10)

    def test_commutes_exactly(self):
        r = np.array([[1.0, 0.1], [0.1, 0.4]])
        s = np.array([[0.5, 0.0], [0.0, 2.0]])
        assert np.array_equal(semigroup_convolve(r, s), semigroup_convolve(s, r))


class TestKappa:
    def test_exponent_zero_exact(self):
        rng = np.random.default_rng(13)
        est, se = kappa_mu(BesselParam(1.5, 1, 1), 50000, rng)
        assert est == pytest.approx(2.0, abs=1e-12)

    def test_closed_form_value(self):
        rng = np.random.default_rng(14)
        est, se = kappa_mu(BesselParam(2.5, 1, 1), 400000, rng)
        assert abs(est - 4.0 / 3.0) <= 4 * se

    def test_against_quadrature(self):
        rng = np.random.default_rng(15)
        for mu, d in ((6.0, 1), (3.5, 2)):
            est, se = kappa_mu(BesselParam(mu, 1, d), 400000, rng)
            ref = kappa_quadrature_1d(mu, d)
            assert abs(est - ref) <= 4 * se, (mu, d)


class TestBesselWalk:
    def test_zero_law(self):
        rng = np.random.default_rng(16)
        cfg = BesselWalkConfig(param=BesselParam(4.0, 1, 1),
                               law=RadialLaw.point_mass(0.0),
                               n_steps=6, checkpoints=(3, 6))
        traj = run_bessel_walks(cfg, rng, 100)
        assert np.all(traj.values == 0)

    def test_two_step_second_moment(self):
        # m2 additivity at n = 2 for the unit point law: E[S_2^2] = 2
        rng = np.random.default_rng(17)
        n = 100000
        cfg = BesselWalkConfig(param=BesselParam(3.0, 1, 1),
                               law=RadialLaw.point_mass(1.0),
                               n_steps=2, checkpoints=(2,))
        traj = run_bessel_walks(cfg, rng, n)
        vals = traj.values[0]
        se = np.std(vals) / np.sqrt(n)
        assert abs(np.mean(vals) - 2.0) <= 4 * se

    @pytest.mark.parametrize("q,p", [(1, 3), (2, 6)])
    def test_matches_group_walk(self, q, p):
        rng = np.random.default_rng(18)
        law = RadialLaw.two_point(1.0, 2.0, 0.5) if q == 1 else MIX2
        n = 10000
        bcfg = BesselWalkConfig(param=BesselParam(p / 2.0, q, 1), law=law,
                                n_steps=5, checkpoints=(5,))
        gcfg = GroupWalkConfig(p=p, q=q, field=cl.REAL, n_steps=5,
                               checkpoints=(5,), law=law, method="direct")
        bt = run_bessel_walks(bcfg, rng, n)
        gt = run_group_walks(gcfg, rng, n)
        _, pvalue = ks_2samp(bt.tr_squared()[0], gt.tr_squared()[0])
        assert pvalue >= 1e-3

    def test_single_walk(self):
        rng = np.random.default_rng(19)
        cfg = BesselWalkConfig(param=BesselParam(5.0, 2, 1), law=MIX2,
                               n_steps=3, checkpoints=(3,))
        traj = run_bessel_walk(cfg, rng)
        assert traj.values.shape == (1, 1, 2, 2)

    def test_checkpoint_validation(self):
        with pytest.raises(ValueError):
            BesselWalkConfig(param=BesselParam(3.0, 1, 1),
                             law=RadialLaw.point_mass(1.0),
                             n_steps=2, checkpoints=(3,))
        with pytest.raises(ValueError):
            BesselWalkConfig(param=BesselParam(3.0, 2, 1),
                             law=RadialLaw.point_mass(1.0),
                             n_steps=2, checkpoints=(2,))


class TestCharacter:
    def test_value_at_zero(self):
        for mu in (0.7, 1.5, 4.0):
            assert bessel_character_1d(mu, 0.0, 1.0) == pytest.approx(1.0)

    def test_spherical_closed_form(self):
        # mu = 3/2 gives sin(x)/x, which vanishes at pi
        assert abs(bessel_character_1d(1.5, math.pi, 1.0)) <= 1e-10
        x = 0.73
        assert bessel_character_1d(1.5, x, 1.0) == pytest.approx(
            math.sin(x) / x, rel=1e-12)

    def test_against_scipy_reference(self):
        from scipy.special import gamma as gamma_fn, jv

        rng = np.random.default_rng(20)
        xs = np.concatenate([rng.uniform(0.01, 50.0, 40), [1e-3, 12.0, 49.9]])
        for mu in (0.7, 1.5, 4.0, 9.3):
            mine = bessel_character_1d(mu, xs, 1.0)
            amp = gamma_fn(mu) * (2.0 / xs) ** (mu - 1) * np.abs(jv(mu - 1, xs))
            ref = gamma_fn(mu) * (2.0 / xs) ** (mu - 1) * jv(mu - 1, xs)
            # relative accuracy against the oscillation amplitude
            scale = np.maximum(np.abs(ref), amp * 1e-4) + 1e-300
            assert np.max(np.abs(mine - ref) / scale) <= 1e-9

    def test_eval_is_vectorized(self):
        out = bessel_character_1d(2.0, np.array([0.0, 1.0, 20.0]), 0.5)
        assert out.shape == (3,)

    def test_range_error(self):
        with pytest.raises(StableRangeError):
            bessel_character_1d(2.0, 500.0, 1.0)
        with pytest.raises(ValueError):
            bessel_character_1d(-1.0, 1.0, 1.0)

    def test_multiplicativity(self):
        rng = np.random.default_rng(21)
        n = 30000
        mu, r1, r2, s = 4.0, 1.0, 2.0, 0.7
        t = convolve_points_scalar(r1, r2, BesselParam(mu, 1, 1), rng, n)
        phi = bessel_character_1d(mu, t, s)
        target = (bessel_character_1d(mu, r1, s)
                  * bessel_character_1d(mu, r2, s))
        se = np.std(phi) / np.sqrt(n)
        assert abs(np.mean(phi) - target) <= 4 * se


class TestRootLipschitz:
    def test_single_step_gap_is_zero(self):
        rng = np.random.default_rng(22)
        f = ClippedQuadraticForm(direction=np.eye(1), cap=10.0)
        law = RadialLaw.two_point(1.0, 2.0, 0.5)
        gap, se = root_lipschitz_gap(law, BesselParam(10.0, 1, 1), 1, f,
                                     2000, rng)
        assert gap == 0.0

    def test_zero_law_gap_is_zero(self):
        rng = np.random.default_rng(23)
        f = ClippedQuadraticForm(direction=np.eye(1), cap=10.0)
        gap, _ = root_lipschitz_gap(RadialLaw.point_mass(0.0),
                                    BesselParam(10.0, 1, 1), 5, f, 2000, rng)
        assert gap == 0.0

    def test_lemma_range_enforced(self):
        rng = np.random.default_rng(24)
        f = ClippedQuadraticForm(direction=np.eye(1), cap=10.0)
        with pytest.raises(ValueError):
            root_lipschitz_gap(RadialLaw.point_mass(1.0),
                               BesselParam(2.0, 1, 1), 4, f, 100, rng)

    def test_lipschitz_constant(self):
        f = ClippedQuadraticForm(direction=np.diag([1.0, 2.0]), cap=3.0)
        assert f.lipschitz == pytest.approx(np.sqrt(5.0))

    def test_matrix_path_matches_scalar_path(self):
        rng = np.random.default_rng(25)
        f = ClippedQuadraticForm(direction=np.eye(2), cap=6.0)
        law = MIX2
        diffs = paired_composition_diffs(law, BesselParam(40.0, 2, 1), 6, f,
                                         4000, rng)
        assert diffs.shape == (4000,)
        assert np.all(np.isfinite(diffs))


class TestDegeneration:
    def test_weak_law_at_fast_growing_index(self):
        # for a point law and mu = n^3 the normalized square concentrates:
        # P(||(S_n^2 - n x^2) / n|| > 0.1) stays below 1%
        rng = np.random.default_rng(26)
        n = 64
        x = np.diag([1.0, 0.5])
        law = RadialLaw.point_mass(x)
        cfg = BesselWalkConfig(param=BesselParam(float(n**3), 2, 1), law=law,
                               n_steps=n, checkpoints=(n,))
        traj = run_bessel_walks(cfg, rng, 2000)
        dev = cl.frob_norm(traj.values[0] - n * (x @ x)) / n
        assert np.mean(dev > 0.1) <= 0.01

    def test_clt2_acceptance_holds_for_large_index_walks(self):
        # the scalar normal limit also holds for the index-mu engine
        from conewalk.limit_lab import normal_cdf, normalize_clt

        rng = np.random.default_rng(27)
        law = RadialLaw.two_point(1.0, 2.0, 0.5)
        md = moments(law)
        n, reps = 100, 20000
        cfg = BesselWalkConfig(param=BesselParam(1e5, 1, 1), law=law,
                               n_steps=n, checkpoints=(n,))
        traj = run_bessel_walks(cfg, rng, reps)
        z = normalize_clt("CLT2", traj.values[0], n, 1e5, md)
        sd = math.sqrt(md.m4 - md.sigma4)
        assert ks_distance(z, lambda t: normal_cdf(t, 0.0, sd)) <= 0.02
