import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from crowdamp.denoise import (denoise, denoise_label, denoise_tabulated,
                              denoise_worker_gm, denoise_worker_rb)
from crowdamp.priors import GaussianMixture, LabelPrior, RademacherBernoulli, Tabulated

A_GRID = [0.0, 0.1, 1.0, 10.0]
B_GRID = np.arange(-5.0, 5.5, 1.0)


def quadrature_moments(pdf, a, b, lo, hi):
    """Independent continuous-prior oracle: direct integration of the tilted density."""
    z = quad(lambda x: pdf(x) * np.exp(-0.5 * a * x**2 + b * x), lo, hi, limit=200)[0]
    m1 = quad(lambda x: x * pdf(x) * np.exp(-0.5 * a * x**2 + b * x), lo, hi, limit=200)[0]
    m2 = quad(lambda x: x * x * pdf(x) * np.exp(-0.5 * a * x**2 + b * x), lo, hi, limit=200)[0]
    return m1 / z, m2 / z - (m1 / z) ** 2, np.log(z)


def atom_moments(values, weights, a, b):
    """Independent discrete-prior oracle: direct summation."""
    w = np.asarray(weights) * np.exp(-0.5 * a * np.asarray(values) ** 2 + b * np.asarray(values))
    z = w.sum()
    mean = (w * values).sum() / z
    var = (w * np.asarray(values) ** 2).sum() / z - mean**2
    return mean, var, np.log(z)


class TestDenoiseLabel:
    def test_symmetric_prior_zero_field(self):
        res = denoise_label(LabelPrior(0.5), 1.0, 0.0)
        assert res.mean == pytest.approx(0.0)
        assert res.variance == pytest.approx(1.0)

    def test_two_atom_oracle(self):
        # beta=1/2, b=1: mean = tanh(1), independent of a
        for a in (0.0, 3.0):
            res = denoise_label(LabelPrior(0.5), a, 1.0)
            mean, var, logz = atom_moments([1.0, -1.0], [0.5, 0.5], a, 1.0)
            assert res.mean == pytest.approx(np.tanh(1.0), abs=1e-12)
            assert res.mean == pytest.approx(mean, abs=1e-12)
            assert res.variance == pytest.approx(var, abs=1e-12)
            assert res.log_partition == pytest.approx(logz, abs=1e-12)

    def test_degenerate_prior(self):
        res = denoise_label(LabelPrior(0.0), 2.0, -3.0)
        assert res.mean == 1.0 and res.variance == 0.0

    def test_variance_identity_for_two_atoms(self):
        for beta in (0.1, 0.5, 0.9):
            res = denoise_label(LabelPrior(beta), 0.5, np.array(B_GRID))
            assert np.allclose(res.variance, 1.0 - res.mean**2, atol=1e-14)

    def test_large_field_stable(self):
        res = denoise_label(LabelPrior(0.4), 1.0, np.array([700.0, -700.0]))
        assert np.all(np.isfinite(res.log_partition))
        assert res.mean == pytest.approx([1.0, -1.0], abs=1e-12)


class TestDenoiseWorkerRB:
    def test_mu_zero_is_point_mass(self):
        res = denoise_worker_rb(RademacherBernoulli(mu=0.0), 1.0, np.array(B_GRID))
        assert np.allclose(res.mean, 0.0) and np.allclose(res.variance, 0.0)

    def test_mu_one_symmetric_is_tanh(self):
        res = denoise_worker_rb(RademacherBernoulli(mu=1.0, lam=0.5), 2.0, np.array(B_GRID))
        assert np.allclose(res.mean, np.tanh(B_GRID), atol=1e-12)

    def test_half_mass_no_adversaries_origin(self):
        res = denoise_worker_rb(RademacherBernoulli(mu=0.5, lam=0.0), 0.0, 0.0)
        mean, var, _ = atom_moments([0.0, 1.0], [0.5, 0.5], 0.0, 0.0)
        assert res.mean == pytest.approx(0.5, abs=1e-14)
        assert res.mean == pytest.approx(mean) and res.variance == pytest.approx(var)

    def test_matches_atom_oracle_on_grid(self):
        wp = RademacherBernoulli(mu=0.3, lam=0.2)
        values, weights = wp.atoms()
        for a in A_GRID:
            res = denoise_worker_rb(wp, a, np.array(B_GRID))
            for i, b in enumerate(B_GRID):
                mean, var, logz = atom_moments(values, weights, a, b)
                assert res.mean[i] == pytest.approx(mean, abs=1e-12)
                assert res.variance[i] == pytest.approx(var, abs=1e-12)
                assert res.log_partition[i] == pytest.approx(logz, abs=1e-12)

    def test_extreme_field_stability(self):
        res = denoise_worker_rb(RademacherBernoulli(mu=0.1, lam=0.3), 5.0,
                                np.array([-700.0, 700.0]))
        assert np.all(np.isfinite(res.mean))
        assert np.all(np.isfinite(res.log_partition))


class TestDenoiseWorkerGM:
    def test_single_gaussian_conjugacy(self):
        # mean (b sigma^2 + m) / (1 + a sigma^2), verified against quadrature
        gm = GaussianMixture(mu=1.0, mean_left=0.0, mean_right=0.7,
                             var_left=1.0, var_right=0.25)
        pdf = lambda x: np.exp(-((x - 0.7) ** 2) / (2 * 0.25)) / np.sqrt(2 * np.pi * 0.25)
        for a in (0.0, 1.0, 4.0):
            for b in (-2.0, 0.0, 1.5):
                res = denoise_worker_gm(gm, a, b)
                closed = (b * 0.25 + 0.7) / (1 + a * 0.25)
                assert res.mean == pytest.approx(closed, abs=1e-12)
                mean, var, logz = quadrature_moments(pdf, a, b, -8, 8)
                assert res.mean == pytest.approx(mean, abs=1e-9)
                assert res.variance == pytest.approx(var, abs=1e-9)
                assert res.log_partition == pytest.approx(logz, abs=1e-9)

    def test_no_observation_returns_prior_mean(self):
        gm = GaussianMixture(mu=0.3, mean_left=-1.0, mean_right=2.0,
                             var_left=0.5, var_right=0.1)
        res = denoise_worker_gm(gm, 0.0, 0.0)
        assert res.mean == pytest.approx(gm.mean, abs=1e-12)
        assert res.log_partition == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_mixture_ignores_mu(self):
        base = dict(mean_left=0.4, mean_right=0.4, var_left=0.3, var_right=0.3)
        for a, b in ((0.5, 1.0), (2.0, -0.7)):
            r1 = denoise_worker_gm(GaussianMixture(mu=0.1, **base), a, b)
            r2 = denoise_worker_gm(GaussianMixture(mu=0.9, **base), a, b)
            assert r1.mean == pytest.approx(r2.mean, abs=1e-12)
            assert r1.variance == pytest.approx(r2.variance, abs=1e-12)

    def test_mixture_matches_quadrature(self):
        gm = GaussianMixture(mu=0.2, mean_left=-0.5, mean_right=1.2,
                             var_left=0.09, var_right=0.36)

        def pdf(x):
            left = np.exp(-((x + 0.5) ** 2) / (2 * 0.09)) / np.sqrt(2 * np.pi * 0.09)
            right = np.exp(-((x - 1.2) ** 2) / (2 * 0.36)) / np.sqrt(2 * np.pi * 0.36)
            return 0.8 * left + 0.2 * right

        for a, b in ((0.0, 0.0), (1.0, 2.0), (5.0, -1.0)):
            res = denoise_worker_gm(gm, a, b)
            mean, var, logz = quadrature_moments(pdf, a, b, -6, 7)
            assert res.mean == pytest.approx(mean, abs=1e-8)
            assert res.variance == pytest.approx(var, abs=1e-8)
            assert res.log_partition == pytest.approx(logz, abs=1e-8)


class TestDenoiseTabulated:
    def test_single_atom(self):
        res = denoise_tabulated(Tabulated(values=[0.7], weights=[1.0]), 3.0, -2.0)
        assert res.mean == pytest.approx(0.7) and res.variance == pytest.approx(0.0)

    def test_two_atoms_match_label_denoiser(self):
        beta = 0.3
        tab = Tabulated(values=[1.0, -1.0], weights=[1 - beta, beta])
        for a in A_GRID:
            got = denoise_tabulated(tab, a, np.array(B_GRID))
            want = denoise_label(LabelPrior(beta), a, np.array(B_GRID))
            assert np.allclose(got.mean, want.mean, atol=1e-12)
            assert np.allclose(got.variance, want.variance, atol=1e-12)
            assert np.allclose(got.log_partition, want.log_partition, atol=1e-12)

    def test_dense_grid_matches_gaussian_closed_form(self):
        # 2001-node trapezoid grid on [-6, 6] against the exact Gaussian path.
        # Only (a, b) pairs whose posterior N(b/(1+a), 1/(1+a)) stays 5 sigma
        # inside the grid support can match to 1e-6; a truncated grid cannot
        # reproduce untruncated moments at corners like (a=0, b=5).
        x = np.linspace(-6, 6, 2001)
        w = np.exp(-0.5 * x**2)
        tab = Tabulated(values=x, weights=w / w.sum())
        gm = GaussianMixture(mu=1.0, mean_left=0.0, mean_right=0.0,
                             var_left=1.0, var_right=1.0)
        checked = 0
        for a in (0.0, 0.5, 2.0, 5.0):
            for b in np.linspace(0.0, 5.0, 6):
                if b / (1 + a) + 5.0 / np.sqrt(1 + a) > 6.0:
                    continue
                got = denoise_tabulated(tab, a, np.array([b]))
                want = denoise_worker_gm(gm, a, np.array([b]))
                assert np.allclose(got.mean, want.mean, atol=1e-6)
                assert np.allclose(got.variance, want.variance, atol=1e-6)
                checked += 1
        assert checked >= 15


class TestDenoiserProperties:
    PRIORS = [
        LabelPrior(0.5), LabelPrior(0.2),
        RademacherBernoulli(mu=0.02, lam=0.5), RademacherBernoulli(mu=0.7, lam=0.1),
        GaussianMixture(mu=0.3, mean_left=0.0, mean_right=1.0, var_left=0.2, var_right=0.5),
        Tabulated(values=[-1.0, -0.2, 0.4, 1.3], weights=[0.1, 0.3, 0.4, 0.2]),
    ]

    @pytest.mark.parametrize("prior", PRIORS, ids=lambda p: type(p).__name__ + str(id(p) % 97))
    def test_variance_matches_field_derivative(self, prior):
        # sigma_x = d f_x / d b via central differences, step 1e-5, tol 1e-6
        h = 1e-5
        for a in A_GRID:
            b = np.array(B_GRID)
            var = denoise(prior, a, b).variance
            fd = (denoise(prior, a, b + h).mean - denoise(prior, a, b - h).mean) / (2 * h)
            assert np.allclose(var, fd, atol=1e-6, rtol=1e-6)

    @pytest.mark.parametrize("prior", PRIORS, ids=lambda p: type(p).__name__ + str(id(p) % 97))
    def test_log_partition_derivative_is_mean(self, prior):
        h = 1e-5
        for a in A_GRID:
            b = np.array(B_GRID)
            mean = denoise(prior, a, b).mean
            fd = (denoise(prior, a, b + h).log_partition
                  - denoise(prior, a, b - h).log_partition) / (2 * h)
            assert np.allclose(mean, fd, atol=1e-6, rtol=1e-6)

    @pytest.mark.parametrize("prior", PRIORS, ids=lambda p: type(p).__name__ + str(id(p) % 97))
    def test_variance_nonnegative_and_mean_monotone(self, prior):
        for a in A_GRID:
            res = denoise(prior, a, np.array(B_GRID))
            assert np.all(res.variance >= 0.0)
            assert np.all(np.diff(res.mean) >= -1e-12)

    @given(a=st.floats(0.0, 20.0), b=st.floats(-50.0, 50.0),
           mu=st.floats(0.0, 1.0), lam=st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_rb_mean_in_hull_and_variance_nonnegative(self, a, b, mu, lam):
        res = denoise_worker_rb(RademacherBernoulli(mu=mu, lam=lam), a, b)
        assert -1.0 - 1e-12 <= float(res.mean) <= 1.0 + 1e-12
        assert float(res.variance) >= 0.0

    @given(a=st.floats(0.0, 20.0), b1=st.floats(-30.0, 30.0),
           db=st.floats(1e-6, 10.0), beta=st.floats(0.01, 0.99))
    @settings(max_examples=200, deadline=None)
    def test_label_mean_monotone_in_field(self, a, b1, db, beta):
        lo = denoise_label(LabelPrior(beta), a, b1).mean
        hi = denoise_label(LabelPrior(beta), a, b1 + db).mean
        assert float(hi) >= float(lo) - 1e-12
