import math

import numpy as np
import pytest
from scipy.stats import beta as beta_dist

from conftest import bin_probs_from_density, chi_square_pvalue
from kaclab.conditioned import marginal_sigma
from kaclab.walk import (
    EstimateReport,
    PairRotation,
    SphereState,
    WalkConfig,
    phi_gap,
    phi_gap_values,
    rayleigh_quotient,
    rotate_pair,
    run_steps,
    sample_uniform_sphere,
    sample_uniform_sphere_batch,
    simulate_continuous,
    spectral_gap_exact,
    sphere_fourth_moment,
    step,
)


def concentrated_state(N):
    return SphereState(np.concatenate([[math.sqrt(N)], np.zeros(N - 1)]))


class TestRotatePair:
    def test_quarter_rotation(self):
        st = SphereState(np.array([1.0, 0.0, math.sqrt(2.0)]))
        out = rotate_pair(st, PairRotation(0, 1, math.pi / 2))
        np.testing.assert_allclose(out.velocities[:2], [0.0, 1.0], atol=1e-15)
        assert out.velocities[2] == st.velocities[2]

    def test_zero_angle_is_identity(self):
        rng = np.random.default_rng(0)
        st = sample_uniform_sphere(6, rng)
        out = rotate_pair(st, PairRotation(2, 4, 0.0))
        np.testing.assert_array_equal(out.velocities, st.velocities)

    def test_eighth_rotation_of_equal_pair(self):
        st = SphereState(np.array([1.0, 1.0]))
        out = rotate_pair(st, PairRotation(0, 1, math.pi / 4))
        np.testing.assert_allclose(out.velocities, [0.0, math.sqrt(2.0)], atol=1e-15)
        assert out.energy() == pytest.approx(2.0, abs=1e-14)

    def test_energy_conserved_per_step(self):
        rng = np.random.default_rng(42)
        N = 64
        st = sample_uniform_sphere(N, rng)
        eps = np.finfo(float).eps
        for _ in range(200):
            i, j = rng.integers(0, N, 2)
            if i == j:
                continue
            out = rotate_pair(st, PairRotation(int(i), int(j), float(rng.uniform(0, 2 * math.pi))))
            assert abs(out.energy() - st.energy()) <= 8 * eps * N
            st = out

    def test_index_out_of_range(self):
        st = SphereState(np.array([1.0, 1.0]))
        with pytest.raises(IndexError):
            rotate_pair(st, PairRotation(0, 5, 1.0))


class TestStep:
    def test_two_particles_always_rotate_the_single_pair(self):
        rng = np.random.default_rng(3)
        st = SphereState(np.array([1.0, -1.0]))
        for _ in range(32):
            new = step(st, rng)
            assert new.energy() == pytest.approx(2.0, abs=1e-13)
            st = new

    def test_pair_frequencies_uniform(self):
        # chi-square against the uniform law on the 10 unordered pairs of N=5
        rng = np.random.default_rng(11)
        N, n_steps = 5, 200_000
        counts = np.zeros((N, N))
        v = sample_uniform_sphere(N, rng).velocities.copy()
        from kaclab.walk import _draw_pair
        for _ in range(n_steps):
            i, j = _draw_pair(N, rng)
            counts[min(i, j), max(i, j)] += 1
        observed = np.array([counts[i, j] for i in range(N) for j in range(i + 1, N)])
        expected = n_steps / 10.0
        chi2 = float(np.sum((observed - expected) ** 2 / expected))
        # chi2(9) has mean 9 and sd sqrt(18); 3-sigma band
        assert chi2 < 9.0 + 3.0 * math.sqrt(18.0)

    def test_energy_drift_without_renormalization(self):
        rng = np.random.default_rng(5)
        N = 100
        st = sample_uniform_sphere(N, rng)
        out = run_steps(st, 1_000_000, rng, renorm_interval=10**9)
        assert abs(out.energy() - N) / N < 1e-8


class TestSimulateContinuous:
    def test_zero_duration_is_identity(self):
        rng = np.random.default_rng(1)
        st = sample_uniform_sphere(8, rng)
        out = simulate_continuous(st, 0.0, rng)
        np.testing.assert_array_equal(out.velocities, st.velocities)

    def test_step_count_is_poisson(self):
        # same generator state: the trajectory must match run_steps with
        # n = Poisson(N * duration) drawn first
        seed, N, duration = 17, 20, 1.5
        st = sample_uniform_sphere(N, np.random.default_rng(99))
        rng_a = np.random.default_rng(seed)
        out_a = simulate_continuous(st, duration, rng_a)
        rng_b = np.random.default_rng(seed)
        n = int(rng_b.poisson(N * duration))
        out_b = run_steps(st, n, rng_b)
        np.testing.assert_array_equal(out_a.velocities, out_b.velocities)

    def test_mean_step_count(self):
        rng = np.random.default_rng(23)
        lam = 50 * 2.0
        draws = rng.poisson(lam, size=10_000)
        # 3-sigma band around the Poisson mean
        assert abs(draws.mean() - lam) < 3.0 * math.sqrt(lam / 10_000)

    def test_negative_duration_rejected(self):
        st = SphereState(np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            simulate_continuous(st, -1.0, np.random.default_rng(0))


class TestInvariantMeasure:
    def test_long_run_first_coordinate_matches_sphere_marginal(self):
        # start concentrated, burn 1e4 * N steps, then bin all coordinates
        rng = np.random.default_rng(31)
        N = 8
        st = concentrated_state(N)
        st = run_steps(st, 10_000 * N, rng)
        collected = []
        for _ in range(3000):
            st = run_steps(st, 5 * N, rng)
            collected.append(st.velocities)
        samples = np.concatenate(collected)
        edges = np.linspace(-2.6, 2.6, 25)
        probs = bin_probs_from_density(lambda x: marginal_sigma(N, 1, x), edges)
        # time-correlated samples: tolerant threshold, fixed seed
        assert chi_square_pvalue(samples, edges, probs) > 1e-3


class TestSampleUniformSphere:
    def test_radius_exact(self):
        rng = np.random.default_rng(2)
        st = sample_uniform_sphere(10, rng)
        assert st.energy() == pytest.approx(10.0, rel=1e-12)

    def test_second_moment(self):
        rng = np.random.default_rng(4)
        V = sample_uniform_sphere_batch(10, 100_000, rng)
        m = (V[:, 0] ** 2).mean()
        se = (V[:, 0] ** 2).std() / math.sqrt(V.shape[0])
        assert abs(m - 1.0) < 3 * se

    def test_fourth_moment_beta_oracle(self):
        # v_1^2 / N ~ Beta(1/2, (N-1)/2), so E v_1^4 = N^2 E B^2
        N = 10
        oracle = N**2 * beta_dist(0.5, (N - 1) / 2).moment(2)
        assert oracle == pytest.approx(3.0 * N / (N + 2), rel=1e-12)
        assert sphere_fourth_moment(N) == pytest.approx(oracle, rel=1e-12)
        rng = np.random.default_rng(6)
        V = sample_uniform_sphere_batch(N, 100_000, rng)
        vals = V[:, 0] ** 4
        assert abs(vals.mean() - oracle) < 3 * vals.std() / math.sqrt(vals.size)


class TestPhiGap:
    def test_two_particle_value(self):
        st = SphereState(np.array([math.sqrt(2.0), 0.0]))
        # sum v^4 = 4; sphere average of v^4 at N=2 is 3/2 per coordinate
        assert phi_gap(st) == pytest.approx(1.0, abs=1e-12)

    def test_alternating_unit_speeds(self):
        N = 6
        st = SphereState(np.array([1.0, -1.0] * 3))
        expected = -2.0 * N * (N - 1) / (N + 2)
        assert phi_gap(st) == pytest.approx(expected, abs=1e-12)

    def test_centered_under_uniform_measure(self):
        rng = np.random.default_rng(8)
        vals = phi_gap_values(sample_uniform_sphere_batch(12, 200_000, rng))
        assert abs(vals.mean()) < 3 * vals.std() / math.sqrt(vals.size)


class TestSpectralGap:
    def test_exact_values(self):
        assert spectral_gap_exact(2) == pytest.approx(2.0)
        assert spectral_gap_exact(10) == pytest.approx(2.0 / 3.0)

    def test_monotone_decreasing_to_half(self):
        ns = [2, 3, 5, 10, 100, 10_000, 1_000_000]
        gaps = [spectral_gap_exact(n) for n in ns]
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] == pytest.approx(0.5, abs=1e-5)

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            spectral_gap_exact(1)


class TestRayleighQuotient:
    def test_matches_gap_at_n10(self):
        rng = np.random.default_rng(12)
        rep = rayleigh_quotient(phi_gap_values, 10, 200_000, rng)
        assert abs(rep.value - 2.0 / 3.0) < 3 * rep.std_error

    def test_matches_gap_at_n2(self):
        rng = np.random.default_rng(13)
        rep = rayleigh_quotient(phi_gap_values, 2, 100_000, rng)
        assert abs(rep.value - 2.0) < 3 * rep.std_error

    def test_constant_trial_function_rejected(self):
        rng = np.random.default_rng(14)
        with pytest.raises(ValueError):
            rayleigh_quotient(lambda V: np.einsum("ij,ij->i", V, V), 10, 10_000, rng)


class TestDeterminism:
    def test_identical_seeds_identical_trajectories(self):
        st = concentrated_state(16)
        a = run_steps(st, 5_000, np.random.default_rng(123))
        b = run_steps(st, 5_000, np.random.default_rng(123))
        np.testing.assert_array_equal(a.velocities, b.velocities)

    def test_rayleigh_reproducible(self):
        a = rayleigh_quotient(phi_gap_values, 5, 50_000, np.random.default_rng(9))
        b = rayleigh_quotient(phi_gap_values, 5, 50_000, np.random.default_rng(9))
        assert a == b


class TestValidation:
    def test_state_off_sphere_rejected(self):
        with pytest.raises(ValueError):
            SphereState(np.array([1.0, 1.1]))

    def test_single_particle_rejected(self):
        with pytest.raises(ValueError):
            SphereState(np.array([1.0]))

    def test_pair_rotation_distinct_indices(self):
        with pytest.raises(ValueError):
            PairRotation(3, 3, 0.5)

    def test_walk_config(self):
        with pytest.raises(ValueError):
            WalkConfig(time_mode="warp-speed")
        with pytest.raises(ValueError):
            WalkConfig(renorm_interval=0)
        assert WalkConfig().time_mode == "poisson-continuous"

    def test_estimate_report_validation(self):
        with pytest.raises(ValueError):
            EstimateReport(value=1.0, std_error=-0.1, n_samples=10)
