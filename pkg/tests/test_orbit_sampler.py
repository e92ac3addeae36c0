import numpy as np
import pytest

from conewalk import cone_linalg as cl
from conewalk.errors import NumericalFailureError
from conewalk.limit_lab import ks_2samp, moment_identity_rhs
from conewalk.orbit_sampler import (
    GroupWalkConfig,
    radial_projection_coeff,
    run_group_walk,
    run_group_walks,
    sample_radial_matrix,
    sample_stiefel_frame,
    stiefel_block,
    wishart_sample,
)
from conewalk.radial_laws import RadialLaw, moments


class TestStiefelFrame:
    @pytest.mark.parametrize("field", cl.FIELDS)
    def test_orthonormal_columns(self, field):
        rng = np.random.default_rng(1)
        q = sample_stiefel_frame(7, 3, field, rng, 200)
        gram = np.conj(np.swapaxes(q, -1, -2)) @ q
        err = np.max(cl.frob_norm(gram - np.eye(3)))
        assert err <= 1e-12

    def test_sign_symmetry_p1(self):
        rng = np.random.default_rng(2)
        n = 40000
        q = sample_stiefel_frame(1, 1, cl.REAL, rng, n)[:, 0, 0]
        assert set(np.unique(np.round(q, 12))) == {-1.0, 1.0}
        assert abs(np.mean(q == 1.0) - 0.5) <= 3 * np.sqrt(0.25 / n)

    def test_haar_invariance_under_permutation(self):
        # a fixed permutation of rows must leave the entry law unchanged
        rng = np.random.default_rng(3)
        n = 10000
        q = sample_stiefel_frame(5, 2, cl.REAL, rng, n)
        perm = [4, 0, 1, 2, 3]
        pq = q[:, perm, :]
        _, pvalue = ks_2samp(np.abs(q[:, 0, 0]), np.abs(pq[:, 0, 0]))
        assert pvalue >= 1e-3


class TestStiefelBlock:
    @pytest.mark.parametrize("field", cl.FIELDS)
    def test_matches_direct_qr_block(self, field):
        rng = np.random.default_rng(4)
        n = 20000
        block = stiefel_block(7, 2, field, rng, n)
        frames = sample_stiefel_frame(7, 2, field, rng, n)
        direct = frames[:, :2, :]
        for stat in (lambda v: np.abs(v[:, 0, 0]),
                     lambda v: np.abs(np.linalg.det(v)),
                     lambda v: np.sum(np.abs(v) ** 2, axis=(1, 2))):
            _, pvalue = ks_2samp(stat(block), stat(direct))
            assert pvalue >= 1e-3

    def test_square_case_is_unitary(self):
        rng = np.random.default_rng(5)
        v = stiefel_block(3, 3, cl.REAL, rng, 100)
        gram = np.swapaxes(v, -1, -2) @ v
        assert np.max(cl.frob_norm(gram - np.eye(3))) <= 1e-10

    def test_projection_coeff_matches_block(self):
        rng = np.random.default_rng(6)
        n = 20000
        for p in (3, 5, 9):
            w = radial_projection_coeff(p, cl.REAL, rng, n)
            v = stiefel_block(p, 1, cl.REAL, rng, n)[:, 0, 0]
            _, pvalue = ks_2samp(w, v)
            assert pvalue >= 1e-3, f"p={p}"


class TestRadialMatrix:
    def test_point_mass_radial_part_exact(self):
        rng = np.random.default_rng(7)
        atom = np.array([[1.0, 0.4], [0.4, 0.8]])
        law = RadialLaw.point_mass(atom)
        x = sample_radial_matrix(law, 6, rng, 1000)
        radial = cl.psd_sqrt(np.swapaxes(x, -1, -2) @ x)
        assert np.max(cl.frob_norm(radial - atom)) <= 1e-10

    def test_unit_sphere_coordinate_moment(self):
        # delta_1 lift is uniform on the sphere: E[x_1^2] = 1/p
        rng = np.random.default_rng(8)
        p, n = 6, 50000
        law = RadialLaw.point_mass(1.0)
        x = sample_radial_matrix(law, p, rng, n)[:, :, 0]
        est = np.mean(x[:, 0] ** 2)
        se = np.std(x[:, 0] ** 2) / np.sqrt(n)
        assert abs(est - 1 / p) <= 4 * se

    def test_zero_atom(self):
        rng = np.random.default_rng(9)
        x = sample_radial_matrix(RadialLaw.point_mass(0.0), 4, rng, 10)
        assert np.all(x == 0)

    def test_mixture_radial_part_hits_an_atom(self):
        rng = np.random.default_rng(30)
        atoms = [np.diag([1.0, 0.5]), np.diag([0.5, 1.0])]
        law = RadialLaw.finite_mixture(atoms, [0.5, 0.5])
        x = sample_radial_matrix(law, 7, rng, 1000)
        radial = cl.psd_sqrt(np.swapaxes(x, -1, -2) @ x)
        dist = np.minimum(cl.frob_norm(radial - atoms[0]),
                          cl.frob_norm(radial - atoms[1]))
        assert np.max(dist) <= 1e-10


class TestWishart:
    def test_q1_chi_square_mean(self):
        rng = np.random.default_rng(10)
        n = 50000
        w = wishart_sample(7, 1, cl.REAL, rng, n)[:, 0, 0]
        se = np.std(w) / np.sqrt(n)
        assert abs(np.mean(w) - 1.0) <= 3 * se

    def test_mean_is_identity(self):
        rng = np.random.default_rng(11)
        n = 100000
        w = wishart_sample(10, 2, cl.REAL, rng, n)
        mean = w.mean(axis=0)
        se = np.max(np.std(w, axis=0)) / np.sqrt(n)
        assert np.max(np.abs(mean - np.eye(2))) <= 4 * se

    def test_variance_shrinks_like_one_over_p(self):
        rng = np.random.default_rng(12)
        n = 20000
        v100 = np.var(wishart_sample(100, 1, cl.REAL, rng, n)[:, 0, 0])
        v400 = np.var(wishart_sample(400, 1, cl.REAL, rng, n)[:, 0, 0])
        assert 4 * 0.7 <= v100 / v400 <= 4 * 1.3


class TestGroupWalk:
    def _cfg(self, **kw):
        defaults = dict(p=3, q=1, field=cl.REAL, n_steps=4, checkpoints=(4,),
                        law=RadialLaw.point_mass(1.0), method="direct")
        defaults.update(kw)
        return GroupWalkConfig(**defaults)

    def test_zero_law_gives_zero_trajectory(self):
        rng = np.random.default_rng(13)
        cfg = self._cfg(law=RadialLaw.point_mass(0.0), method="direct")
        traj = run_group_walks(cfg, rng, 50)
        assert np.all(traj.values == 0)

    @pytest.mark.parametrize("method", ["direct", "polar"])
    def test_simple_walk_exact_enumeration(self, method):
        # p = q = 1 with unit steps is the +/-1 walk; at n = 4 the folded
        # endpoint takes values 0, 2, 4 with probabilities 6/16, 8/16, 2/16
        rng = np.random.default_rng(14)
        n = 40000
        cfg = self._cfg(p=1, method=method)
        traj = run_group_walks(cfg, rng, n)
        norms = np.sqrt(traj.values[0])
        for value, prob in ((0.0, 6 / 16), (2.0, 8 / 16), (4.0, 2 / 16)):
            freq = np.mean(np.abs(norms - value) < 1e-9)
            se = np.sqrt(prob * (1 - prob) / n)
            assert abs(freq - prob) <= 4 * se, (method, value)

    def test_second_moment_identity_q1(self):
        # E ||S_20||^2 = 20 * m2 = 50 for the (1, 2; 1/2) two-point law
        rng = np.random.default_rng(15)
        n = 100000
        law = RadialLaw.two_point(1.0, 2.0, 0.5)
        cfg = self._cfg(p=7, n_steps=20, checkpoints=(20,), law=law, method="polar")
        traj = run_group_walks(cfg, rng, n)
        vals = traj.values[0]
        se = np.std(vals) / np.sqrt(n)
        assert abs(np.mean(vals) - 50.0) <= 3 * se

    def test_second_moment_identity_q2(self):
        rng = np.random.default_rng(16)
        law = RadialLaw.finite_mixture(
            [np.diag([1.0, 0.5]), np.diag([0.5, 1.0])], [0.5, 0.5])
        md = moments(law)
        cfg = GroupWalkConfig(p=9, q=2, field=cl.REAL, n_steps=6,
                              checkpoints=(6,), law=law, method="polar")
        traj = run_group_walks(cfg, rng, 50000)
        tr = traj.tr_squared()[0]
        se = np.std(tr) / np.sqrt(tr.size)
        assert abs(np.mean(tr) - 6 * md.m2) <= 4 * se

    @pytest.mark.parametrize("q,p", [(1, 5), (2, 6)])
    def test_polar_equals_direct_in_law(self, q, p):
        rng = np.random.default_rng(17)
        if q == 1:
            law = RadialLaw.two_point(1.0, 2.0, 0.5)
        else:
            law = RadialLaw.finite_mixture(
                [np.diag([1.0, 0.5]), np.diag([0.5, 1.0])], [0.5, 0.5])
        n = 10000
        base = dict(p=p, q=q, field=cl.REAL, n_steps=4, checkpoints=(4,), law=law)
        t_direct = run_group_walks(GroupWalkConfig(method="direct", **base),
                                   rng, n)
        t_polar = run_group_walks(GroupWalkConfig(method="polar", **base),
                                  rng, n)
        _, pvalue = ks_2samp(t_direct.tr_squared()[0], t_polar.tr_squared()[0])
        assert pvalue >= 1e-3

    def test_fourth_moment_identity(self):
        # E[(||S_n||^2 - n s2)^2] = n (m4 - s2^2) + 2 n (n-1) s2^2 / p
        rng = np.random.default_rng(18)
        law = RadialLaw.two_point(1.0, 2.0, 0.5)
        md = moments(law)
        n_steps, p, reps = 10, 20, 200000
        cfg = self._cfg(p=p, n_steps=n_steps, checkpoints=(n_steps,), law=law,
                        method="polar")
        traj = run_group_walks(cfg, rng, reps)
        y = (traj.values[0] - n_steps * md.m2) ** 2
        se = np.std(y) / np.sqrt(reps)
        assert abs(np.mean(y) - moment_identity_rhs(n_steps, p, md)) <= 4 * se

    def test_multiple_checkpoints(self):
        rng = np.random.default_rng(19)
        cfg = self._cfg(n_steps=6, checkpoints=(2, 4, 6))
        traj = run_group_walks(cfg, rng, 100)
        assert traj.values.shape == (3, 100)
        assert traj.steps == (2, 4, 6)

    def test_single_walk_wrapper(self):
        rng = np.random.default_rng(20)
        traj = run_group_walk(self._cfg(), rng)
        assert traj.values.shape == (1, 1)

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_overflow_raises(self):
        rng = np.random.default_rng(21)
        cfg = self._cfg(law=RadialLaw.point_mass(1e200), n_steps=4)
        with pytest.raises(NumericalFailureError):
            run_group_walks(cfg, rng, 8)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            self._cfg(checkpoints=(5,))
        with pytest.raises(ValueError):
            self._cfg(checkpoints=())
        with pytest.raises(ValueError):
            GroupWalkConfig(p=1, q=2, field=cl.REAL, n_steps=2, checkpoints=(2,),
                            law=RadialLaw.point_mass(np.eye(2)))
        with pytest.raises(ValueError):
            self._cfg(law=RadialLaw.point_mass(np.eye(2)))
