import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from coulombmix import mcmc
from coulombmix import mixture as X
from coulombmix._errors import InvalidInputError
from coulombmix.ensembles import EnsembleParams
from coulombmix.mixture import Dataset, Hyper, Kernel, MixtureModel, MixtureState
from coulombmix.mcmc import SamplerConfig
from coulombmix.priors import CoulombPrior

from oracles import ANCHOR_MODELS, mh_anchor_residuals, random_problem

MODELS = ANCHOR_MODELS


class TestAcceptanceRatioAnchor:
    """Every move's log ratio equals target ratio times reverse/forward proposal ratio."""

    def test_all_moves(self):
        for move, (n, worst) in mh_anchor_residuals(250, seed=7).items():
            assert n >= 250
            assert worst < 1e-8, move

    def test_death_unavailable_when_all_allocated(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            model, data, s = random_problem("gauss1d", rng)
            if mcmc.propose_death(s, model, rng) is None:
                assert s.M == 1 or np.all(s.counts > 0)

    def test_support_violation_is_minus_inf(self):
        model = MixtureModel(CoulombPrior((EnsembleParams.laguerre(0.0, 1.0),)), Kernel("gaussian1d"))
        s = MixtureState(np.array([[1e-3], [1.0]]), np.ones(2), np.zeros(1, int), np.ones(2), np.ones(1))
        rng = np.random.default_rng(0)
        ratios = [mcmc.propose_location(s, Dataset([0.1]), model, 0, 5.0, rng) for _ in range(50)]
        assert any(r == -math.inf for new, r in ratios if new[0] <= 0)
        assert all(r == -math.inf for new, r in ratios if new[0] <= 0)


class TestGibbs:
    def test_weights_and_u_distribution(self):
        model = MODELS["gauss1d"]
        data = Dataset(np.zeros(5))
        base = MixtureState(np.array([[0.0], [1.0]]), np.array([0.5, 2.0]), np.array([0, 0, 0, 1, 0]),
                            np.ones(2), np.ones(1))
        rng = np.random.default_rng(11)
        us, S0 = [], []
        for _ in range(20000):
            s = base.copy()
            mcmc.step_weights_and_u(s, data, model, rng)
            us.append(s.u)
            S0.append(s.S[0] * (1 + s.u))
        # u | S ~ Gamma(n, rate T); S_0 (1 + u) ~ Gamma(gamma_s + n_0)
        assert stats.kstest(us, stats.gamma(5, scale=1 / 2.5).cdf).pvalue > 0.001
        assert stats.kstest(S0, stats.gamma(0.7 + 4).cdf).pvalue > 0.001

    def test_allocation_frequencies(self):
        model = MODELS["gauss1d"]
        s0 = MixtureState(np.array([[-1.0], [0.5], [2.0]]), np.array([1.0, 2.0, 0.5]),
                          np.zeros(1, int), np.array([1.0, 0.5, 2.0]), np.ones(1))
        lp = X.allocation_log_probs(s0, [0.2], model)
        p = np.exp(lp - special.logsumexp(lp))
        rng = np.random.default_rng(12)
        draws = np.array([mcmc.step_allocations(s0.copy(), Dataset([0.2]), model, rng).z[0]
                          for _ in range(30000)])
        freq = np.bincount(draws, minlength=3) / draws.size
        np.testing.assert_allclose(freq, p, atol=4 * np.sqrt(p * (1 - p) / draws.size).max())

    def test_kernel_params_grouping(self):
        model = MODELS["gauss1d"]
        y = np.array([10.0, -10.0, 10.5])
        s = MixtureState(np.array([[10.0], [-10.0], [0.0]]), np.ones(3), np.array([0, 1, 0]),
                         np.ones(3), np.ones(1))
        rng = np.random.default_rng(13)
        draws = np.array([mcmc.step_kernel_params(s.copy(), Dataset(y), model, rng).kernel_params
                          for _ in range(20000)])
        # component 0 sees residuals (0, 0.5); component 2 sees none
        a0, b0 = (6 + 2) / 2, (1 + 0.25) / 2
        a2, b2 = 3.0, 0.5
        assert draws[:, 0].mean() == pytest.approx(b0 / (a0 - 1), rel=0.03)
        assert draws[:, 2].mean() == pytest.approx(b2 / (a2 - 1), rel=0.03)


class TestDriver:
    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            SamplerConfig(n_iter=10, n_burnin=10)
        with pytest.raises(InvalidInputError):
            SamplerConfig(n_iter=10, n_burnin=5, adapt_iters=6)
        with pytest.raises(InvalidInputError):
            SamplerConfig(fixed_M=0)

    def test_determinism(self):
        data = Dataset(np.random.default_rng(0).normal(size=20))
        cfg = SamplerConfig(n_iter=60, n_burnin=20, thin=2, adapt_iters=10)
        a = mcmc.run_chain(cfg, data, MODELS["gauss1d"], np.random.default_rng(7))
        b = mcmc.run_chain(cfg, data, MODELS["gauss1d"], np.random.default_rng(7))
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.M, b.M)
        np.testing.assert_array_equal(a.zeta, b.zeta)
        for x, y in zip(a.locations, b.locations):
            np.testing.assert_array_equal(x, y)

    def test_record_count_and_frozen_adaptation(self):
        data = Dataset(np.random.default_rng(1).normal(size=15))
        cfg = SamplerConfig(n_iter=80, n_burnin=30, thin=5, adapt_iters=20)
        out = mcmc.run_chain(cfg, data, MODELS["gauss1d"], np.random.default_rng(1))
        assert len(out) == cfg.n_records == 10
        assert np.unique(out.location_step).size == 1
        assert np.unique(out.zeta_step).size == 1
        assert out.location_step[0] != cfg.location_step

    def test_fixed_M_holds(self):
        data = Dataset(np.random.default_rng(2).integers(0, 9, 25))
        cfg = SamplerConfig(n_iter=60, n_burnin=10, fixed_M=4, adapt_iters=10)
        out = mcmc.run_chain(cfg, data, MODELS["binomial"], np.random.default_rng(2))
        assert np.all(out.M == 4)
        assert "birth" not in out.acceptance

    def test_zeta_fixed(self):
        data = Dataset(np.random.default_rng(3).normal(size=10))
        cfg = SamplerConfig(n_iter=30, n_burnin=10, adapt_iters=5, infer_zeta=False, zeta_init=2.5)
        out = mcmc.run_chain(cfg, data, MODELS["gauss1d"], np.random.default_rng(3))
        assert np.all(out.zeta == 2.5)

    def test_empty_dataset(self):
        cfg = SamplerConfig(n_iter=30, n_burnin=10, adapt_iters=5)
        out = mcmc.run_chain(cfg, Dataset(np.empty((0, 1))), MODELS["gauss1d"], np.random.default_rng(4))
        assert out.z.shape == (10, 0)
        assert np.all(out.K == 0)

    def test_states_roundtrip(self):
        data = Dataset(np.random.default_rng(5).normal(size=(12, 2)))
        cfg = SamplerConfig(n_iter=20, n_burnin=5, thin=3, adapt_iters=5)
        out = mcmc.run_chain(cfg, data, MODELS["gauss2d"], np.random.default_rng(5))
        for s in out.states():
            s.validate(12)
            assert math.isfinite(X.log_joint(s, data, MODELS["gauss2d"]))

    def test_bad_data_rejected(self):
        with pytest.raises(InvalidInputError):
            mcmc.run_chain(SamplerConfig(n_iter=5, n_burnin=1, adapt_iters=0), Dataset([9.0]),
                           MODELS["binomial"], np.random.default_rng(0))


class TestPosteriorAgainstQuadrature:
    """Single component, one dimension: the zeta posterior by two routes."""

    y = np.array([0.8, 1.4, 0.3, 1.1, 2.0])

    def log_marginal_given_zeta(self, zeta, hyper):
        # integrate the variance analytically and the location numerically
        a, b = hyper.nu / 2, 0.5
        n = self.y.size

        def f(x):
            ss = np.sum((self.y - x) ** 2)
            return math.exp(-0.5 * zeta * x * x + 0.5 * math.log(zeta / (2 * math.pi))
                            + special.gammaln(a + n / 2) - special.gammaln(a) + a * math.log(b)
                            - (a + n / 2) * math.log(b + ss / 2) - 0.5 * n * math.log(2 * math.pi))

        val, _ = integrate.quad(f, -15, 15, limit=200)
        return math.log(val)

    def test_zeta_posterior_mean(self):
        model = MixtureModel(CoulombPrior((EnsembleParams.hermite(1.0),)), Kernel("gaussian1d"),
                             Hyper(zeta_shape=2.0, zeta_rate=2.0))
        h = model.hyper

        def post(z):
            return math.exp(stats.gamma.logpdf(z, h.zeta_shape, scale=1 / h.zeta_rate)
                            + self.log_marginal_given_zeta(z, h))

        Z, _ = integrate.quad(post, 0, 30, limit=200)
        mean, _ = integrate.quad(lambda z: z * post(z), 0, 30, limit=200)
        mean /= Z

        cfg = SamplerConfig(n_iter=30000, n_burnin=2000, thin=1, adapt_iters=1000, fixed_M=1)
        out = mcmc.run_chain(cfg, Dataset(self.y), model, np.random.default_rng(99))
        draws = out.zeta[:, 0]
        batches = draws[: draws.size // 50 * 50].reshape(50, -1).mean(axis=1)
        se = batches.std(ddof=1) / math.sqrt(batches.size)
        assert abs(draws.mean() - mean) < 4 * se + 0.01
