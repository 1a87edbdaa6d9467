import math

import numpy as np
import pytest

from batchbins.core import (
    LoadState,
    PreconditionViolated,
    RngSeedPlan,
    WeightDistribution,
    moment_bound_S,
)
from batchbins.potentials import (
    PotentialOverflow,
    PotentialParams,
    c_delta,
    drift_upper_bounds,
    hyperbolic_potential,
    lambda_potential,
    monte_carlo_batch_moment,
    verify_main_theorem,
)
from batchbins.processes import (
    ProcessSpec,
    probability_vector,
    worst_case_vector,
)


def centered_sorted(rng, n, sigma=5.0):
    y = rng.normal(0.0, sigma, n)
    return np.sort(y - y.mean())[::-1]


class TestCDelta:
    def test_quarter(self):
        # Independent evaluation of the four branches at delta = 1/4:
        # max(1/16, 1/3, 2 (8/3)^{3/2} / 3, 2 (8/3)^{1/6}) doubled.
        branches = [
            0.25 / 4,
            0.25 / 0.75,
            2 * (8 / 3) ** 1.5 / 3,
            2 * (8 / 3) ** (1 / 6),
        ]
        assert c_delta(0.25) == pytest.approx(2 * max(branches), rel=1e-12)
        assert c_delta(0.25) == pytest.approx(5.8062, abs=2e-4)

    def test_positive_on_range(self):
        for d in (0.1, 0.25, 0.5, 0.75, 0.9):
            assert c_delta(d) > 0

    def test_out_of_range(self):
        from batchbins.core import InvalidParameter

        with pytest.raises(InvalidParameter):
            c_delta(1.0)


class TestHyperbolicPotential:
    def test_all_zero(self):
        snap = hyperbolic_potential(np.zeros(7), alpha=0.3)
        assert snap.gamma_total == pytest.approx(14.0)
        snap.validate()

    def test_log2_example(self):
        snap = hyperbolic_potential(np.array([1.0, -1.0]), alpha=math.log(2))
        assert snap.gamma_total == pytest.approx(5.0, rel=1e-12)

    def test_three_bin_example(self):
        # Direct evaluation: e^2 + e^-2 + 2 (e + e^-1) = 13.696713921...
        snap = hyperbolic_potential(np.array([2.0, -1.0, -1.0]), alpha=1.0)
        expected = math.exp(2) + math.exp(-2) + 2 * (math.e + math.exp(-1))
        assert snap.gamma_total == pytest.approx(expected, rel=1e-12)
        assert snap.gamma_total == pytest.approx(13.696713921428238, rel=1e-12)

    def test_overflow_signals(self):
        with pytest.raises(PotentialOverflow):
            hyperbolic_potential(np.array([800.0, -800.0]), alpha=1.0)

    def test_gamma_at_least_2n(self):
        rng = RngSeedPlan(21).generator()
        for _ in range(200):
            n = int(rng.integers(2, 50))
            snap = hyperbolic_potential(centered_sorted(rng, n), alpha=0.1)
            assert snap.gamma_total >= 2 * n - 1e-9
            snap.validate()


class TestLambdaPotential:
    def test_none_above(self):
        assert lambda_potential(np.array([1.0, -1.0]), gamma=0.5, k=2.0) == 0.0

    def test_exactly_at_threshold(self):
        assert lambda_potential(np.array([2.0, -2.0]), gamma=0.5, k=2.0) == 1.0

    def test_direct_evaluation(self):
        val = lambda_potential(np.array([5.0, 3.0, -8.0]), gamma=0.5, k=2.0)
        assert val == pytest.approx(math.exp(1.5) + math.exp(0.5), rel=1e-12)
        assert val == pytest.approx(6.1304, abs=1e-4)

    def test_monotone_in_gamma(self):
        y = np.array([6.0, 4.0, 2.0, -12.0])
        vals = [lambda_potential(y, g, k=2.0) for g in (0.1, 0.2, 0.5, 1.0, 2.0)]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


class TestDriftUpperBounds:
    def test_uniform_vector(self):
        rng = RngSeedPlan(22).generator()
        y = centered_sorted(rng, 16)
        snap = hyperbolic_potential(y, alpha=0.2)
        p = probability_vector(ProcessSpec.one_choice(), 16)
        d_phi, d_psi, d_gamma = drift_upper_bounds(p, snap, alpha=0.2, K=3.0)
        quad = 3.0 * 0.2**2 / 16
        assert d_phi == pytest.approx(snap.phi * quad, rel=1e-9)
        assert d_psi == pytest.approx(snap.psi * quad, rel=1e-9)
        assert d_gamma == pytest.approx(d_phi + d_psi)

    def test_zero_k_flat_state_cancels(self):
        q = worst_case_vector(8, 0.5, 0.25)
        snap = hyperbolic_potential(np.zeros(8), alpha=0.3)
        _, _, d_gamma = drift_upper_bounds(q, snap, alpha=0.3, K=0.0)
        assert d_gamma == pytest.approx(0.0, abs=1e-12)

    def test_independent_reevaluation(self):
        # Plain-python recomputation of both sums for q(1/4, 1/2) on n = 4.
        q = worst_case_vector(4, 0.25, 0.5)
        y = np.array([2.0, 1.0, -1.0, -2.0])
        alpha, K = 0.1, 2.0
        snap = hyperbolic_potential(y, alpha)
        d_phi, d_psi, _ = drift_upper_bounds(q, snap, alpha, K)
        exp_phi = sum(math.exp(alpha * yi) * ((pi - 0.25) * alpha + K * alpha**2 / 4)
                      for yi, pi in zip(y, q.p))
        exp_psi = sum(math.exp(-alpha * yi) * ((0.25 - pi) * alpha + K * alpha**2 / 4)
                      for yi, pi in zip(y, q.p))
        assert d_phi == pytest.approx(exp_phi, rel=1e-12)
        assert d_psi == pytest.approx(exp_psi, rel=1e-12)


class TestVerifyMainTheorem:
    def test_flat_state_holds(self):
        p = probability_vector(ProcessSpec.two_choice(), 16)
        holds, lhs, rhs = verify_main_theorem(p, np.zeros(16), alpha=0.005,
                                              epsilon=0.5, delta=0.25, K=1.0)
        assert holds
        assert rhs > 0  # -(eps delta/8)(alpha/n) 2n + c eps alpha > 0

    def test_precondition_c1(self):
        p = probability_vector(ProcessSpec.one_choice(), 16)
        with pytest.raises(PreconditionViolated):
            verify_main_theorem(p, np.zeros(16), 0.005, 0.5, 0.25, 1.0)

    def test_precondition_alpha(self):
        p = probability_vector(ProcessSpec.two_choice(), 16)
        with pytest.raises(PreconditionViolated):
            verify_main_theorem(p, np.zeros(16), alpha=0.5, epsilon=0.5,
                                delta=0.25, K=1.0)  # eps*delta/8 = 1/64

    def test_randomized_sweep_small(self):
        rng = RngSeedPlan(23).generator()
        n = 32
        cases = [
            (probability_vector(ProcessSpec.two_choice(), n), 0.25, 0.5),
            (probability_vector(ProcessSpec.one_plus_beta(0.5), n), 0.25, 0.25),
            (probability_vector(ProcessSpec.quantile(0.5), n), 0.5, 0.5),
            (worst_case_vector(n, 0.25, 0.5), 0.25, 0.5),
        ]
        for p, delta, eps in cases:
            alpha = eps * delta / 16.0
            for _ in range(100):
                y = centered_sorted(rng, n)
                holds, lhs, rhs = verify_main_theorem(p, y, alpha, eps, delta, K=1.0)
                assert holds, (delta, eps, lhs, rhs)


class TestPotentialParams:
    def test_alpha_tilde_is_fixed_fraction(self):
        params = PotentialParams(alpha=0.24, K=1.0)
        assert params.alpha_tilde == 0.24 / 240

    def test_batched_factory(self):
        S = moment_bound_S(WeightDistribution.unit())
        params = PotentialParams.for_batched_process(
            delta=0.25, epsilon=0.5, C=2.0, S=S, b=256, n=256)
        assert params.K == pytest.approx(5 * 4 * S * S)
        assert params.alpha == pytest.approx(0.5 * 0.25 / (8 * params.K))
        assert params.c_delta == pytest.approx(c_delta(0.25))
        assert params.gamma == pytest.approx(min(0.5 / (8 * S), math.log(256)))
        # k = ln(c_tilde/delta)/alpha_tilde with c_tilde = 16 c / delta.
        c_tilde = 16 * params.c_delta / 0.25
        assert params.k_threshold == pytest.approx(
            math.log(c_tilde / 0.25) / params.alpha_tilde)


def flat_state(n):
    return LoadState(loads=np.zeros(n), total_weight=0.0, step=0)


def random_state(n, seed):
    rng = RngSeedPlan(seed).generator()
    loads = rng.poisson(10.0, n).astype(float)
    return LoadState(loads=loads, total_weight=float(loads.sum()),
                     step=int(loads.sum()))


class TestMonteCarloBatchMoment:
    def test_b_zero_exact(self):
        state = random_state(8, 31)
        rng = RngSeedPlan(32).generator()
        res = monte_carlo_batch_moment(ProcessSpec.two_choice(), state, 0,
                                       WeightDistribution.unit(), 1e-6, 10, rng)
        snap = hyperbolic_potential(
            np.sort(state.loads)[::-1] - state.total_weight / 8, 1e-6)
        assert np.allclose(res.mean_phi, snap.per_bin_phi)
        assert np.allclose(res.mean_psi, snap.per_bin_psi)

    def test_alpha_precondition(self):
        state = flat_state(8)
        rng = RngSeedPlan(33).generator()
        with pytest.raises(PreconditionViolated):
            monte_carlo_batch_moment(ProcessSpec.two_choice(), state, 8,
                                     WeightDistribution.unit(), 0.5, 10, rng)

    def test_two_choice_flat_within_bound(self):
        state = flat_state(8)
        weights = WeightDistribution.unit()
        S = moment_bound_S(weights)
        alpha = 8 / (2 * 2 * S * 8)
        rng = RngSeedPlan(34).generator()
        res = monte_carlo_batch_moment(ProcessSpec.two_choice(), state, 8,
                                       weights, alpha, 10**4, rng)
        phi_ok, psi_ok = res.aggregate_within_bound()
        assert phi_ok and psi_ok

    def test_one_choice_first_order_vanishes(self):
        # For the uniform vector the linear term is zero, so the estimate
        # stays within the quadratic band around the current potential.
        state = random_state(8, 35)
        weights = WeightDistribution.unit()
        S = moment_bound_S(weights)
        C = 1.0
        b = 8
        alpha = 8 / (2 * C * S * b) / 10
        rng = RngSeedPlan(36).generator()
        res = monte_carlo_batch_moment(ProcessSpec.one_choice(), state, b,
                                       weights, alpha, 10**4, rng, C=C)
        quad = 5 * C * C * S * S * (b / 8) * (alpha**2 / 8) * b
        phi_now = math.fsum(hyperbolic_potential(
            np.sort(state.loads)[::-1] - state.total_weight / 8, alpha).per_bin_phi)
        est = math.fsum(res.mean_phi)
        assert abs(est - phi_now) <= phi_now * quad + 3 * res.agg_se_phi

    def test_weighted_path_within_bound(self):
        state = random_state(8, 37)
        weights = WeightDistribution.exponential()
        S = moment_bound_S(weights)
        alpha = 8 / (2 * 2 * S * 8)
        rng = RngSeedPlan(38).generator()
        res = monte_carlo_batch_moment(ProcessSpec.two_choice(), state, 8,
                                       weights, alpha, 5000, rng)
        phi_ok, psi_ok = res.aggregate_within_bound()
        assert phi_ok and psi_ok
