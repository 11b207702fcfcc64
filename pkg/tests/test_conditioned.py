import math

import numpy as np
import pytest
from scipy.stats import chi2 as chi2_dist

from conftest import bin_probs_from_density, chi_square_pvalue
from kaclab.conditioned import (
    ConditionedProduct,
    MetropolisSampler,
    asymptotic_log_Z,
    build_ztable,
    convolve_power,
    entropy_per_particle,
    entropy_production_per_particle,
    gamma_ratio_check,
    marginal_conditioned,
    marginal_entropy_gap,
    marginal_sigma,
    metropolis_sampler,
    squared_pushforward,
)
from kaclab.densities import bc_mixture, maxwellian, moments, relative_entropy_to_gaussian
from kaclab.walk import sample_uniform_sphere_batch
from kaclab.wild import entropy_production_D

GAMMA = maxwellian(1.0)
LOG_2PI = math.log(2.0 * math.pi)


class TestSquaredPushforward:
    def test_gamma_gives_chi_square_1(self):
        h = squared_pushforward(GAMMA, n_points=2**14)
        u = h.grid[1:]
        ref = chi2_dist.pdf(u, 1)
        # node values match the chi-square density away from the endpoint cells
        mask = (u > 0.05) & (u < 20.0)
        rel = np.abs(h.values[1:][mask] - ref[mask]) / ref[mask]
        assert rel.max() < 1e-3

    def test_mass_and_mean_exact(self):
        for f in (GAMMA, bc_mixture(0.3)):
            h = squared_pushforward(f, n_points=2**14)
            assert h.mass() == pytest.approx(1.0, abs=1e-6)
            assert h.mean() == pytest.approx(moments(f).energy, abs=1e-6)

    def test_variance_is_sigma_squared(self):
        h = squared_pushforward(GAMMA, n_points=2**15)
        assert h.variance() == pytest.approx(2.0, abs=1e-4)

    def test_grid_density_input(self):
        from kaclab.densities import to_grid
        f = bc_mixture(0.3)
        hg = squared_pushforward(to_grid(f), n_points=2**14)
        hm = squared_pushforward(f, n_points=2**14)
        assert hg.mean() == pytest.approx(hm.mean(), abs=1e-5)


class TestConvolvePower:
    def test_gamma_power_is_chi_square_n(self):
        N = 16
        h = squared_pushforward(GAMMA, u_max=N + 12 * math.sqrt(2.0 * N), n_points=2**15)
        s = convolve_power(h, N)
        u = s.grid
        ref = chi2_dist.pdf(u, N)
        bulk = ref >= 1e-5 * ref.max()
        rel = np.abs(s.values[bulk] - ref[bulk]) / ref[bulk]
        assert rel.max() < 1e-4

    def test_mass_mean_variance_identities(self):
        f = bc_mixture(0.3)
        mom = moments(f)
        N = 64
        h = squared_pushforward(f, u_max=N * mom.energy + 12 * math.sqrt(N) * mom.sigma,
                                n_points=2**15)
        s = convolve_power(h, N)
        assert s.mass() == pytest.approx(1.0, abs=1e-5)
        assert s.mean() == pytest.approx(N * mom.energy, rel=1e-3)
        assert s.variance() == pytest.approx(N * mom.sigma**2, rel=1e-2)

    def test_insufficient_support_rejected(self):
        h = squared_pushforward(GAMMA, u_max=40.0, n_points=2**12)
        with pytest.raises(ValueError):
            convolve_power(h, 64)


class TestZTable:
    def test_gamma_log_z_prime_vanishes_on_bulk(self):
        # gamma^{(x) N} is constant on spheres, so log Z' should vanish; the
        # discrete convolution keeps it below 1e-4 wherever s_N carries mass
        # (+-4 sigma; further out the chi-square left tail is below the
        # quantization noise floor of the cell discretization)
        N = 128
        t = build_ztable(GAMMA, N, n_points=2**16)
        sig = math.sqrt(2.0 * N)
        bulk = (t.u > N - 4 * sig) & (t.u < N + 4 * sig)
        assert np.abs(t.log_Z_prime[bulk]).max() < 1e-4

    def test_gamma_closed_form_identity(self):
        # log Z_N(gamma, sqrt u) = -(N/2) log(2 pi) - u/2 holds exactly for the
        # reference subtracted inside the table
        N = 32
        t = build_ztable(GAMMA, N, n_points=2**14)
        ref = -0.5 * N * LOG_2PI - 0.5 * t.u
        finite = np.isfinite(t.log_Z)
        np.testing.assert_allclose((t.log_Z - t.log_Z_prime)[finite], ref[finite], atol=1e-12)

    def test_gamma_value_at_radius_sqrt_n(self):
        for N, tol in ((4, 1e-8), (16, 1e-6)):
            t = build_ztable(GAMMA, N, n_points=2**16)
            exact = -0.5 * N * LOG_2PI - 0.5 * N
            assert float(t.log_z_at(np.array(float(N)))) == pytest.approx(exact, abs=tol)

    def test_zprime_converges_to_sqrt2_over_sigma(self):
        f = bc_mixture(0.3)
        target = math.log(math.sqrt(2.0) / moments(f).sigma)
        t = build_ztable(f, 1024, n_points=2**16)
        val = float(t.log_z_prime_at(np.array(1024.0)))
        assert abs(val - target) < 0.05

    def test_csv_serialization(self, tmp_path):
        t = build_ztable(GAMMA, 8, n_points=2**12)
        path = tmp_path / "ztable.csv"
        t.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# {")
        assert lines[1] == "u,log_Z,log_Z_prime"
        assert "\"N\": 8" in lines[0]


class TestAsymptoticLogZ:
    def test_gamma_exact_at_sqrt_n(self):
        for N in (4, 64, 1024):
            got = asymptotic_log_Z(GAMMA, N, math.sqrt(N))
            exact = -0.5 * N * LOG_2PI - 0.5 * N
            assert got == pytest.approx(exact, abs=1e-10)

    def test_agreement_with_table_improves_in_n(self):
        f = bc_mixture(0.3)
        diffs = []
        for N in (128, 1024):
            t = build_ztable(f, N, n_points=2**16)
            diffs.append(abs(float(t.log_z_at(np.array(float(N))))
                             - asymptotic_log_Z(f, N, math.sqrt(N))))
        assert diffs[1] < diffs[0]
        assert diffs[1] < 0.05

    def test_u_profile_tracks_gaussian_factor(self):
        # within +-2 sigma of u = N E, the table profile follows the
        # asymptotic form; the residual is the local-CLT o(1) error
        f = bc_mixture(0.3)
        mom = moments(f)
        N = 1024
        t = build_ztable(f, N, n_points=2**16)
        w = 2.0 * math.sqrt(N) * mom.sigma
        us = np.linspace(N - w, N + w, 41)
        asym = np.array([asymptotic_log_Z(f, N, math.sqrt(u)) for u in us])
        resid = np.abs(t.log_z_at(us) - asym)
        assert resid.max() < 0.06

    def test_r_positive_required(self):
        with pytest.raises(ValueError):
            asymptotic_log_Z(GAMMA, 16, 0.0)


class TestMarginalSigma:
    def test_integrates_to_one_k1(self):
        N = 12
        x = np.linspace(-math.sqrt(N) * 0.9999, math.sqrt(N) * 0.9999, 20001)
        assert np.trapezoid(marginal_sigma(N, 1, x), x) == pytest.approx(1.0, abs=1e-6)

    def test_integrates_to_one_k2(self):
        N = 12
        g = np.linspace(-math.sqrt(N) * 0.9999, math.sqrt(N) * 0.9999, 801)
        X, Y = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([X, Y], axis=-1)
        vals = marginal_sigma(N, 2, pts.reshape(-1, 2)).reshape(X.shape)
        dg = g[1] - g[0]
        assert vals.sum() * dg * dg == pytest.approx(1.0, abs=1e-6)

    def test_large_n_limit_is_gaussian(self):
        assert marginal_sigma(10_000, 1, 0.0) == pytest.approx(
            1.0 / math.sqrt(2.0 * math.pi), abs=1e-4)

    def test_vanishes_outside_sphere(self):
        assert marginal_sigma(10, 1, 4.0) == 0.0

    def test_matches_monte_carlo_histogram(self):
        rng = np.random.default_rng(77)
        N = 10
        V = sample_uniform_sphere_batch(N, 40_000, rng)
        edges = np.linspace(-2.8, 2.8, 29)
        probs = bin_probs_from_density(lambda x: marginal_sigma(N, 1, x), edges)
        assert chi_square_pvalue(V[:, 0], edges, probs) > 1e-3

    def test_k_range_enforced(self):
        with pytest.raises(ValueError):
            marginal_sigma(4, 3, np.zeros(3))


class TestMarginalConditioned:
    @pytest.fixture(scope="class")
    def tables(self):
        f = bc_mixture(0.3)
        N = 256
        return f, N, build_ztable(f, N, n_points=2**15), build_ztable(f, N - 1, n_points=2**15)

    def test_integrates_to_one(self, tables):
        f, N, t, tm1 = tables
        v = np.linspace(-10, 10, 4001)
        P = marginal_conditioned(f, N, 1, v, t, tm1)
        assert np.trapezoid(P, v) == pytest.approx(1.0, abs=1e-4)

    def test_gamma_reduces_to_marginal_sigma(self):
        N = 128
        t = build_ztable(GAMMA, N, n_points=2**15)
        tm1 = build_ztable(GAMMA, N - 1, n_points=2**15)
        v = np.linspace(-5, 5, 101)
        P = marginal_conditioned(GAMMA, N, 1, v, t, tm1)
        ref = marginal_sigma(N, 1, v)
        assert np.abs(P - ref).max() < 2e-4

    def test_close_to_f_in_total_variation(self, tables):
        f, N, t, tm1 = tables
        v = np.linspace(-10, 10, 4001)
        P = marginal_conditioned(f, N, 1, v, t, tm1)
        tv = np.trapezoid(np.abs(P - f.evaluate(v)), v)
        assert tv < 0.05

    def test_requires_tables(self, tables):
        f, N, t, tm1 = tables
        with pytest.raises(ValueError):
            marginal_conditioned(f, N, 1, 0.0, None, tm1)
        with pytest.raises(ValueError):
            marginal_conditioned(f, N, 3, np.zeros(3), t, tm1)

    def test_zero_outside_sphere(self, tables):
        f, N, t, tm1 = tables
        assert marginal_conditioned(f, N, 1, math.sqrt(N) + 1.0, t, tm1) == 0.0


class TestMarginalEntropyGap:
    def test_gamma_gap_small_and_decreasing(self):
        vals = [marginal_entropy_gap(GAMMA, N, 1, n_points=2**15) for N in (64, 256)]
        assert vals[1] < vals[0]
        assert vals[1] < 1e-4

    def test_mixture_gap_decreasing(self):
        f = bc_mixture(0.3)
        vals = [marginal_entropy_gap(f, N, 1, n_points=2**15) for N in (64, 256)]
        assert 0 < vals[1] < vals[0]

    def test_two_particle_gap_nonnegative(self):
        f = bc_mixture(0.3)
        val = marginal_entropy_gap(f, 128, 2, n_points=2**14)
        assert val >= 0.0


class TestMetropolisSampler:
    def test_gamma_accepts_every_proposal(self):
        cp = ConditionedProduct.gaussian(32)
        rng = np.random.default_rng(5)
        sampler = MetropolisSampler(cp, rng, n_chains=4, burn_in=100, thinning=8)
        sampler.draw()
        sampler.draw()
        assert sampler.accepted == sampler.proposed
        assert sampler.acceptance_ratio() == 1.0

    def test_states_live_on_sphere(self):
        cp = ConditionedProduct.build(bc_mixture(0.3), 64, n_points=2**14)
        stream = metropolis_sampler(cp, burn_in=200, thinning=16, rng=np.random.default_rng(6))
        it = iter(stream)
        for _ in range(3):
            state = next(it)
            assert state.n_particles == 64
            assert state.energy() == pytest.approx(64.0, rel=1e-9)

    def test_second_moment_is_unity(self):
        cp = ConditionedProduct.build(bc_mixture(0.3), 64, n_points=2**14)
        sampler = MetropolisSampler(cp, np.random.default_rng(7), n_chains=64,
                                    burn_in=1000, thinning=64)
        vals = []
        for _ in range(40):
            V = sampler.draw()
            vals.append((V**2).mean(axis=1))
        # sum v^2 = N exactly on the sphere, so this is an exact identity
        assert np.abs(np.concatenate(vals) - 1.0).max() < 1e-9

    def test_first_coordinate_histogram_matches_marginal(self):
        f = bc_mixture(0.3)
        N = 128
        t = build_ztable(f, N, n_points=2**15)
        tm1 = build_ztable(f, N - 1, n_points=2**15)
        cp = ConditionedProduct(f=f, N=N,
                                log_z_prime=float(t.log_z_prime_at(np.array(float(N)))))
        sampler = MetropolisSampler(cp, np.random.default_rng(8), n_chains=128,
                                    burn_in=40 * N, thinning=N)
        cols = []
        for _ in range(60):
            cols.append(sampler.draw()[:, 0].copy())
        samples = np.concatenate(cols)
        edges = np.linspace(-3.5, 3.5, 24)
        probs = bin_probs_from_density(
            lambda x: marginal_conditioned(f, N, 1, x, t, tm1), edges)
        assert chi_square_pvalue(samples, edges, probs) > 1e-3

    def test_requires_mixture(self):
        from kaclab.densities import to_grid
        cp = ConditionedProduct(f=to_grid(GAMMA), N=16, log_z_prime=0.0)
        with pytest.raises(TypeError):
            MetropolisSampler(cp, np.random.default_rng(0))


class TestConditionedProduct:
    def test_log_density_gamma_constant(self):
        cp = ConditionedProduct.gaussian(16)
        rng = np.random.default_rng(3)
        from kaclab.walk import sample_uniform_sphere
        st = sample_uniform_sphere(16, rng)
        # F^N = 1 for gamma: log density 0 using sum v^2 = N
        assert cp.log_density(st) == pytest.approx(0.0, abs=1e-10)

    def test_build_uses_exact_normalization(self):
        f = bc_mixture(0.3)
        cp = ConditionedProduct.build(f, 128, n_points=2**15)
        t = build_ztable(f, 128, n_points=2**15)
        assert cp.log_z_prime == pytest.approx(
            float(t.log_z_prime_at(np.array(128.0))), abs=1e-12)


class TestEntropyPerParticle:
    def test_gamma_is_exactly_zero(self):
        cp = ConditionedProduct.gaussian(64)
        rep = entropy_per_particle(cp, 400, np.random.default_rng(1), n_chains=8,
                                   burn_in=100, thinning=8)
        assert rep.value == pytest.approx(0.0, abs=1e-12)
        assert rep.std_error == pytest.approx(0.0, abs=1e-12)

    def test_matches_quadrature_oracle_small_n(self):
        # independent oracle: H_N/N = int P_1 log f + (1 + log 2 pi)/2 - log Z'_N / N
        f = bc_mixture(0.3)
        N = 100
        t = build_ztable(f, N, n_points=2**15)
        tm1 = build_ztable(f, N - 1, n_points=2**15)
        v = np.linspace(-9.9, 9.9, 4001)
        P = marginal_conditioned(f, N, 1, v, t, tm1)
        P /= np.trapezoid(P, v)
        lzp = float(t.log_z_prime_at(np.array(float(N))))
        oracle = (np.trapezoid(P * f.log_evaluate(v), v)
                  + 0.5 * (1.0 + LOG_2PI) - lzp / N)
        cp = ConditionedProduct(f=f, N=N, log_z_prime=lzp)
        rep = entropy_per_particle(cp, 20_000, np.random.default_rng(2), n_chains=100)
        assert abs(rep.value - oracle) < 3.5 * rep.std_error

    def test_deterministic_given_seed(self):
        cp = ConditionedProduct.build(bc_mixture(0.3), 50, n_points=2**14)
        a = entropy_per_particle(cp, 500, np.random.default_rng(11), n_chains=10)
        b = entropy_per_particle(cp, 500, np.random.default_rng(11), n_chains=10)
        assert a == b


class TestEntropyProductionPerParticle:
    def test_gamma_log_difference_vanishes(self):
        cp = ConditionedProduct.gaussian(32)
        rep = entropy_production_per_particle(cp, 400, np.random.default_rng(4),
                                              n_chains=8, burn_in=100, thinning=8)
        assert rep.value == pytest.approx(0.0, abs=1e-10)

    def test_slow_production_trend_in_delta(self):
        # D_N / H_N smaller for the more extreme mixture (delta = 0.01)
        rng = np.random.default_rng(9)
        N = 100
        ratios = []
        for d in (0.3, 0.01):
            f = bc_mixture(d)
            cp = ConditionedProduct.build(f, N, n_points=2**15)
            prod = entropy_production_per_particle(cp, 6000, rng, n_chains=100)
            ent = entropy_per_particle(cp, 6000, rng, n_chains=100)
            ratios.append(prod.value / ent.value)
        assert ratios[1] < ratios[0]


class TestGammaRatioCheck:
    def test_gamma_ratio_near_one(self):
        val = gamma_ratio_check(GAMMA, 256, 1.0, 1.0, n_points=2**15)
        assert val == pytest.approx(1.0, abs=1e-2)

    def test_mixture_ratio_near_one_at_large_n(self):
        f = bc_mixture(0.3)
        val = gamma_ratio_check(f, 1024, 1.0, 1.0, n_points=2**16)
        assert val == pytest.approx(1.0, abs=0.05)

    def test_support_validated(self):
        with pytest.raises(ValueError):
            gamma_ratio_check(GAMMA, 16, 3.0, 3.0)
