import logging
import math

import numpy as np
import pytest
from scipy import stats

from elasticbmc.calibrate import (
    CalibrationProblem,
    DiscrepancyBasis,
    EmulatorForward,
    Experiment,
    MCMCConfig,
    MCMCError,
    SimulatorForward,
    build_shift_discrepancy_basis,
    effective_sample_size,
    log_likelihood,
    log_posterior,
    mcmc_sample,
    mh_accept,
    posterior_predict,
    prior_spec,
)
from elasticbmc.emulator import train
from elasticbmc.grid import GridFunction, unit_grid
from elasticbmc.phase import ShootingVector, shooting_to_gamma


def toy_parts(n_t=21):
    """Model y(x, theta) = a + x c + theta b; shooting v(x, theta) = 0.05 theta cos(pi t)."""
    g = unit_grid(n_t)
    t = g.points
    a, b, c = np.sin(np.pi * t), t, np.cos(3 * t)
    w = 0.05 * np.cos(np.pi * t)
    w -= np.trapezoid(w, t)
    return g, a, b, c, w


def toy_emulators(n_t=21, seed=0):
    g, a, b, c, w = toy_parts(n_t)
    X = np.random.default_rng(seed).random((30, 2))
    curves = [GridFunction(g, a + x * c + th * b) for x, th in X]
    shoots = [th * w for _, th in X]
    ea = train(X, curves, surrogate="linear", input_ranges=[[0, 1], [0, 1]])
    es = train(X, shoots, surrogate="linear", grid=g, input_ranges=[[0, 1], [0, 1]])
    return ea, es


def toy_problem(xs=(0.3,), theta=0.4, noise=0.0, seed=1, use_shooting=True, s2v_prior=None,
                prior=("uniform", -5.0, 5.0), s2a_prior=None, n_t=21):
    g, a, b, c, w = toy_parts(n_t)
    ea, es = toy_emulators(n_t)
    rng = np.random.default_rng(seed)
    exps = []
    for x in xs:
        z = a + x * c + theta * b + noise * rng.standard_normal(g.points.size)
        v = theta * w
        exps.append(Experiment(GridFunction(g, z), ShootingVector(g, v), [x]))
    return CalibrationProblem(
        exps, EmulatorForward(ea, es if use_shooting else None), [prior],
        sigma2_aligned_prior=s2a_prior, sigma2_shooting_prior=s2v_prior,
        use_shooting=use_shooting, emulator_variance="none",
    )


class TestPriors:
    def test_uniform(self):
        p = prior_spec("uniform", 0, 1)
        assert p.logpdf(0.5) == 0.0
        assert p.logpdf(1.5) == -math.inf

    def test_inverse_gamma_mean_by_sampling(self):
        p = prior_spec("inverse_gamma", 2, 1)
        assert p.mean == 1.0
        # shape 2 has infinite variance; a long sample still lands within 1%
        draws = p.sample(np.random.default_rng(0), 10**6)
        assert np.mean(draws) == pytest.approx(1.0, rel=0.01)

    def test_inverse_gamma_density(self):
        p = prior_spec("inverse_gamma", 3.0, 2.0)
        for x in (0.1, 1.0, 4.0):
            assert p.logpdf(x) == pytest.approx(stats.invgamma(3.0, scale=2.0).logpdf(x), rel=1e-12)
        assert p.logpdf(-1.0) == -math.inf

    def test_normal_density(self):
        p = prior_spec("normal", 1.0, 2.0)
        assert p.logpdf(0.3) == pytest.approx(stats.norm(1.0, 2.0).logpdf(0.3), rel=1e-12)

    @pytest.mark.parametrize("args", [("uniform", 1, 0), ("normal", 0, -1),
                                      ("inverse_gamma", 0, 1), ("beta", 1, 1)])
    def test_bad_specs(self, args):
        with pytest.raises(ValueError):
            prior_spec(*args)


class TestLikelihood:
    def test_brute_force_three_points(self):
        n_t = 3
        prob = toy_problem(n_t=n_t, noise=0.1, theta=0.25)
        theta, s2a, s2v = 0.6, 0.02, 0.003
        g, a, b, c, w = toy_parts(n_t)
        e = prob.experiments[0]
        ya = a + 0.3 * c + theta * b
        yv = theta * w
        expect = sum(stats.norm(m, math.sqrt(s2a)).logpdf(z) for m, z in zip(ya, e.aligned_obs.values))
        expect += sum(stats.norm(m, math.sqrt(s2v)).logpdf(z) for m, z in zip(yv, e.shooting_obs.values))
        assert abs(log_likelihood(prob, [theta], s2a, s2v) - expect) < 1e-10

    def test_zero_residual_is_normalizing_constant(self):
        prob = toy_problem(xs=(0.3, 0.7), theta=0.4)
        s2a, s2v = 0.05, 0.2
        n_t = 21
        const = -0.5 * 2 * n_t * (math.log(2 * math.pi * s2a) + math.log(2 * math.pi * s2v))
        assert log_likelihood(prob, [0.4], s2a, s2v) == pytest.approx(const, abs=1e-9)

    def test_doubling_variance(self):
        prob = toy_problem(xs=(0.3, 0.7), theta=0.4)
        n, n_t = 2, 21
        lo = log_likelihood(prob, [0.4], 0.05, 0.2)
        hi = log_likelihood(prob, [0.4], 0.1, 0.2)
        assert lo - hi == pytest.approx(n * n_t / 2 * math.log(2), abs=1e-9)

    def test_nonpositive_variance_rejected(self):
        prob = toy_problem()
        with pytest.raises(ValueError):
            log_likelihood(prob, [0.4], 0.0, 1.0)

    def test_permutation_invariance(self):
        prob = toy_problem(xs=(0.1, 0.5, 0.9), theta=0.4, noise=0.05)
        perm = prob.permuted([2, 0, 1])
        for th in (0.2, 0.4, 0.8):
            assert abs(log_posterior(prob, [th], 0.01, 0.02) - log_posterior(perm, [th], 0.01, 0.02)) < 1e-8

    def test_outside_prior_support(self):
        prob = toy_problem(prior=("uniform", 0.0, 1.0))
        assert log_posterior(prob, [1.5], 0.01, 0.01) == -math.inf

    def test_non_finite_simulator_gives_minus_infinity(self, caplog):
        g = unit_grid(31)
        f = GridFunction(g, np.sin(np.pi * g.points) + 1)
        prob = CalibrationProblem(
            [Experiment.aligned_to_self(f)],
            SimulatorForward(lambda grid, u: GridFunction(grid, np.full(len(grid), np.nan))),
            [("uniform", 0.0, 1.0)],
        )
        with caplog.at_level(logging.WARNING):
            assert log_likelihood(prob, [0.5], 1.0, 1.0) == -math.inf
        assert "failed" in caplog.text

    def test_direct_mode_prefers_truth(self):
        g = unit_grid(61)
        t = g.points

        def sim(grid, u):
            return GridFunction(grid, (1 + u[0]) * np.exp(-((grid.points - 0.4 - 0.2 * u[0]) ** 2) / 0.01))

        obs = sim(g, [0.5])
        prob = CalibrationProblem([Experiment.aligned_to_self(obs)], SimulatorForward(sim),
                                  [("uniform", 0.0, 1.0)])
        good = log_likelihood(prob, [0.5], 1e-3, 1e-3)
        assert good > log_likelihood(prob, [0.2], 1e-3, 1e-3)
        assert good > log_likelihood(prob, [0.8], 1e-3, 1e-3)
        assert t.size == 61

    def test_grid_mismatch_rejected(self):
        ea, es = toy_emulators()
        g = unit_grid(25)
        e = Experiment(GridFunction(g, np.zeros(25)), ShootingVector(g, np.zeros(25)), [0.3])
        with pytest.raises(ValueError, match="grid"):
            CalibrationProblem([e], EmulatorForward(ea, es), [("uniform", 0, 1)])

    def test_exactly_one_forward_mode(self):
        prob = toy_problem()
        with pytest.raises(ValueError):
            CalibrationProblem(prob.experiments, None, [("uniform", 0, 1)])


class TestShiftBasis:
    def test_one_hot_at_midpoints(self):
        g = unit_grid(401)
        bp = [0.2, 0.5, 0.7]
        D = build_shift_discrepancy_basis(g, bp, active_segment=1)
        assert D.K == 4
        mids = [0.1, 0.6, 0.85]
        rows = [np.argmin(abs(g.points - m)) for m in mids]
        np.testing.assert_array_equal(D.basis_matrix[rows, :3], np.eye(3))
        assert np.max(np.abs(D.basis_matrix), axis=0) == pytest.approx(np.ones(4))

    def test_bad_breakpoints(self):
        g = unit_grid(51)
        with pytest.raises(ValueError):
            build_shift_discrepancy_basis(g, [0.5, 0.2, 0.7])
        with pytest.raises(ValueError):
            build_shift_discrepancy_basis(g, [0.0, 0.2, 0.7])

    def test_zero_coefficients_leave_warp_alone(self):
        g = unit_grid(101)
        D = build_shift_discrepancy_basis(g, [0.2, 0.5, 0.7])
        v = D.evaluate(np.zeros(4))
        gam = shooting_to_gamma(ShootingVector(g, v))
        np.testing.assert_array_equal(gam.values, g.points)

    def test_perturbation_support(self):
        g = unit_grid(401)
        t = g.points
        b1 = 0.2
        D = build_shift_discrepancy_basis(g, [b1, 0.5, 0.7], active_segment=1)
        cols = D.basis_matrix
        # tangent combination of the two later constant columns
        i2, i3 = np.trapezoid(cols[:, 1], t), np.trapezoid(cols[:, 2], t)
        eps = 1e-3
        v = D.evaluate([0.0, eps, -eps * i2 / i3, 0.0])
        gam = shooting_to_gamma(ShootingVector(g, v))
        diff = np.abs(gam.values - t)
        assert np.max(diff[t < b1]) < 1e-6
        assert np.max(diff[t > b1]) > 1e-5

    def test_invalid_basis(self):
        with pytest.raises(ValueError):
            DiscrepancyBasis(np.ones((5, 2)), [1.0, 0.0])
        with pytest.raises(ValueError):
            DiscrepancyBasis(np.full((5, 1), np.inf), 1.0)


class TestMetropolis:
    def test_five_state_stationary_distribution(self):
        target = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        target /= target.sum()
        logp = np.log(target)
        rng = np.random.default_rng(2024)
        steps = 10**6
        moves = rng.choice([-1, 1], size=steps)
        counts = np.zeros(5)
        s = 0
        for k in range(steps):
            prop = (s + moves[k]) % 5
            if mh_accept(rng, logp[prop] - logp[s]):
                s = prop
            counts[s] += 1
        assert np.max(np.abs(counts / steps - target)) < 0.01

    def test_sure_acceptance_and_rejection(self):
        rng = np.random.default_rng(0)
        assert all(mh_accept(rng, 0.0) for _ in range(1000))
        assert not any(mh_accept(rng, -800.0) for _ in range(1000))


class TestMCMC:
    S2 = 0.01

    def linear_gaussian(self):
        return toy_problem(theta=0.4, noise=math.sqrt(self.S2), seed=5, use_shooting=False,
                           s2a_prior=prior_spec("fixed", self.S2))

    def test_linear_gaussian_posterior_mean(self):
        prob = self.linear_gaussian()
        g, a, b, c, w = toy_parts()
        r = prob.experiments[0].aligned_obs.values - a - 0.3 * c
        mean = float(b @ r / (b @ b))
        sd = math.sqrt(self.S2 / (b @ b))
        s = mcmc_sample(prob, MCMCConfig(n_iter=20000, n_burn=5000, seed=11))
        x = s.theta[:, 0]
        mcse = np.std(x) / math.sqrt(effective_sample_size(x))
        assert abs(x.mean() - mean) < 3 * mcse
        assert np.std(x) == pytest.approx(sd, rel=0.1)

    def test_seed_determinism(self):
        prob = toy_problem(noise=0.05, xs=(0.2, 0.6))
        cfg = MCMCConfig(n_iter=1500, n_burn=500, seed=3)
        s1, s2 = mcmc_sample(prob, cfg), mcmc_sample(prob, cfg)
        for f in ("theta", "sigma2_aligned", "sigma2_shooting", "log_posterior"):
            np.testing.assert_array_equal(getattr(s1, f), getattr(s2, f))
        s3 = mcmc_sample(prob, MCMCConfig(n_iter=1500, n_burn=500, seed=4))
        assert not np.array_equal(s1.theta, s3.theta)

    def test_draws_respect_support(self):
        prob = toy_problem(noise=0.05, prior=("uniform", 0.0, 1.0))
        s = mcmc_sample(prob, MCMCConfig(n_iter=2000, n_burn=500, seed=1))
        assert np.all((s.theta >= 0) & (s.theta <= 1))
        assert np.all(s.sigma2_aligned > 0) and np.all(s.sigma2_shooting > 0)
        assert 0 < s.acceptance_rates["theta"] < 1

    def test_masked_shooting_equals_vague_shooting(self):
        masked = toy_problem(theta=0.4, noise=0.1, seed=8, use_shooting=False,
                             s2a_prior=prior_spec("fixed", 0.01))
        vague = toy_problem(theta=0.4, noise=0.1, seed=8, use_shooting=True,
                            s2a_prior=prior_spec("fixed", 0.01),
                            s2v_prior=prior_spec("fixed", 1e8))
        cfg = MCMCConfig(n_iter=8000, n_burn=2000, seed=21)
        x1 = mcmc_sample(masked, cfg).theta[:, 0]
        x2 = mcmc_sample(vague, cfg).theta[:, 0]
        se = math.hypot(np.std(x1) / math.sqrt(effective_sample_size(x1)),
                        np.std(x2) / math.sqrt(effective_sample_size(x2)))
        assert abs(x1.mean() - x2.mean()) < 3 * se

    def test_discrepancy_draws_recorded(self):
        prob = toy_problem(noise=0.05, xs=(0.2, 0.6))
        prob.discrepancy_shooting = build_shift_discrepancy_basis(unit_grid(21), [0.2, 0.5, 0.7])
        s = mcmc_sample(prob, MCMCConfig(n_iter=600, n_burn=200, seed=2))
        assert s.discrepancy_coeffs.shape == (400, 8)
        da, dv = s.split_discrepancy(prob)
        assert da is None and dv.shape == (400, 2, 4)

    def test_abort_after_consecutive_rejections(self):
        g = unit_grid(31)
        f = GridFunction(g, np.sin(np.pi * g.points) + 1)
        calls = {"n": 0}

        def sim(grid, u):
            calls["n"] += 1
            vals = f.values if calls["n"] == 1 else np.full(len(grid), np.nan)
            return GridFunction(grid, vals)

        prob = CalibrationProblem([Experiment.aligned_to_self(f)], SimulatorForward(sim),
                                  [("uniform", 0.0, 1.0)], use_shooting=False)
        with pytest.raises(MCMCError, match="consecutive"):
            mcmc_sample(prob, MCMCConfig(n_iter=5000, n_burn=100, n_init=1, seed=0))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            MCMCConfig(n_iter=100, n_burn=100)

    def test_csv_round_trip(self, tmp_path):
        prob = toy_problem(noise=0.05)
        s = mcmc_sample(prob, MCMCConfig(n_iter=300, n_burn=100, seed=0))
        path = tmp_path / "chain.csv"
        s.to_csv(path)
        back = type(s).from_csv(path)
        np.testing.assert_array_equal(back.theta, s.theta)
        np.testing.assert_array_equal(back.log_posterior, s.log_posterior)


class TestPredict:
    def test_zero_shooting_gives_aligned_predictions(self):
        g, a, b, c, w = toy_parts()
        X = np.random.default_rng(0).random((30, 2))
        ea = train(X, [GridFunction(g, a + x * c + th * b) for x, th in X], surrogate="linear")
        es = train(X, [np.zeros(21)] * 30, grid=g)
        e = Experiment(GridFunction(g, a), ShootingVector(g, np.zeros(21)), [0.3])
        prob = CalibrationProblem([e], EmulatorForward(ea, es), [("uniform", 0.0, 1.0)],
                                  emulator_variance="none")
        s = mcmc_sample(prob, MCMCConfig(n_iter=400, n_burn=100, seed=0))
        pd = posterior_predict(s, prob, n_draws=20, include_noise=False)
        assert pd.n_resampled == 0
        for curve, j in zip(pd.curves, pd.draw_index):
            mean, _ = ea.predict_arrays([0.3, s.theta[j, 0]])
            np.testing.assert_array_equal(curve.values, mean)

    def test_empty_samples_rejected(self):
        prob = toy_problem()
        s = mcmc_sample(prob, MCMCConfig(n_iter=300, n_burn=100, seed=0))
        s.theta = s.theta[:0]
        with pytest.raises(ValueError):
            posterior_predict(s, prob)
