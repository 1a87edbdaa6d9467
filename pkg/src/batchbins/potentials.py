"""Exponential potential functions over normalized loads and the drift
inequalities they satisfy: the hyperbolic-cosine potential with its
deterministic per-vector drift bound, the overload-threshold potential, and a
Monte Carlo check of the one-batch moment bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    InvalidParameter,
    LoadState,
    PreconditionViolated,
    WeightDistribution,
    moment_bound_S,
    rank_order,
)
from .processes import ProbabilityVector, ProcessSpec, check_C1, probability_vector

__all__ = [
    "PotentialOverflow",
    "c_delta",
    "PotentialParams",
    "PotentialSnapshot",
    "hyperbolic_potential",
    "lambda_potential",
    "drift_upper_bounds",
    "verify_main_theorem",
    "BatchMomentResult",
    "monte_carlo_batch_moment",
]

_ALPHA_TILDE_DIVISOR = 240  # 8 * 30; fixed relation between the two smoothings.


class PotentialOverflow(OverflowError):
    """exp() would overflow float64; the caller must shrink alpha."""


def c_delta(delta: float) -> float:
    """Additive drift constant c(delta), taken verbatim (all four branches).

    c := 2 * max( delta/4, delta/(1-delta),
                  2 * e^{((1-delta)/(2 delta)) ln(8/3)} * delta/(1-delta),
                  2 * e^{(delta/(2 (1-delta))) ln(8/3)} ).
    """
    if not (0.0 < delta < 1.0):
        raise InvalidParameter("delta must be in (0, 1)")
    l83 = math.log(8.0 / 3.0)
    return 2.0 * max(
        delta / 4.0,
        delta / (1.0 - delta),
        2.0 * math.exp((1.0 - delta) / (2.0 * delta) * l83) * delta / (1.0 - delta),
        2.0 * math.exp(delta / (2.0 * (1.0 - delta)) * l83),
    )


@dataclass(frozen=True)
class PotentialParams:
    """Smoothing and drift constants for one (process, weights, b, n) setup."""

    alpha: float
    K: float
    gamma: float | None = None
    k_threshold: float | None = None
    c_delta: float | None = None

    def __post_init__(self):
        if not (self.alpha > 0.0):
            raise InvalidParameter("alpha must be > 0")
        if not (self.K >= 0.0):
            raise InvalidParameter("K must be >= 0")

    @property
    def alpha_tilde(self) -> float:
        return self.alpha / _ALPHA_TILDE_DIVISOR

    @classmethod
    def for_batched_process(cls, delta: float, epsilon: float, C: float, S: float,
                            b: int, n: int) -> "PotentialParams":
        """Constants for the batched drift analysis.

        K = 5 C^2 S^2 b/n, alpha = eps*delta/(8K) (so the stationary bound
        E[Gamma] <= (8 c/delta) n applies), gamma = min(eps/(4CS), n ln n / b),
        and the overload threshold k = ln(c_tilde/delta) / alpha_tilde with
        c_tilde = 16 c / delta.
        """
        K = 5.0 * C * C * S * S * b / n
        alpha = epsilon * delta / (8.0 * K)
        if not (alpha <= min(1.0, epsilon * delta / (8.0 * K))):
            raise InvalidParameter("alpha exceeds min(1, eps*delta/(8K))")
        c = c_delta(delta)
        c_tilde = 16.0 * c / delta
        alpha_tilde = alpha / _ALPHA_TILDE_DIVISOR
        gamma = min(epsilon / (4.0 * C * S), n * math.log(n) / b)
        k = math.log(c_tilde / delta) / alpha_tilde
        return cls(alpha=alpha, K=K, gamma=gamma, k_threshold=k, c_delta=c)


@dataclass(frozen=True)
class PotentialSnapshot:
    """Per-bin and aggregate values of the hyperbolic-cosine potential."""

    gamma_total: float
    phi: float
    psi: float
    per_bin_phi: np.ndarray
    per_bin_psi: np.ndarray
    lam: float | None = None

    @property
    def n(self) -> int:
        return len(self.per_bin_phi)

    def validate(self) -> None:
        if abs(self.gamma_total - (self.phi + self.psi)) > 1e-9 * max(1.0, self.gamma_total):
            raise InvalidParameter("Gamma must equal Phi + Psi")
        if self.gamma_total < 2.0 * self.n - 1e-9:
            raise InvalidParameter("Gamma must be at least 2n")


def hyperbolic_potential(y, alpha: float) -> PotentialSnapshot:
    """Gamma = sum_i e^{alpha y_i} + e^{-alpha y_i}, with per-bin terms kept.

    Sums use exact (fsum) accumulation since the terms span many orders of
    magnitude.  Raises PotentialOverflow instead of saturating to inf.
    """
    if not (alpha > 0.0):
        raise InvalidParameter("alpha must be > 0")
    yv = np.asarray(getattr(y, "y", y), dtype=np.float64)
    peak = alpha * float(np.max(np.abs(yv), initial=0.0))
    if peak > 700.0:
        raise PotentialOverflow(f"alpha * max|y| = {peak:.3g} > 700")
    phi_i = np.exp(alpha * yv)
    psi_i = np.exp(-alpha * yv)
    phi = math.fsum(phi_i)
    psi = math.fsum(psi_i)
    return PotentialSnapshot(gamma_total=phi + psi, phi=phi, psi=psi,
                             per_bin_phi=phi_i, per_bin_psi=psi_i)


def lambda_potential(y, gamma: float, k: float) -> float:
    """Exponential mass of bins overloaded beyond k: sum over y_i >= k of
    e^{gamma (y_i - k)}; zero when no bin qualifies."""
    if not (gamma > 0.0):
        raise InvalidParameter("gamma must be > 0")
    yv = np.asarray(getattr(y, "y", y), dtype=np.float64)
    over = yv[yv >= k]
    if len(over) == 0:
        return 0.0
    return math.fsum(np.exp(gamma * (over - k)))


def drift_upper_bounds(p: ProbabilityVector, snap: PotentialSnapshot,
                       alpha: float, K: float) -> tuple[float, float, float]:
    """Closed-form drift majorants (dPhi_bar, dPsi_bar, dGamma_bar).

    dPhi_bar = sum_i Phi_i ((p_i - 1/n) alpha + K alpha^2 / n) and the Psi
    analogue with the sign of the linear term flipped.  p must be in the same
    rank order as the snapshot's bins.
    """
    n = snap.n
    if p.n != n:
        raise InvalidParameter("p and snapshot must share n")
    lin = (p.p - 1.0 / n) * alpha
    quad = K * alpha * alpha / n
    d_phi = math.fsum(snap.per_bin_phi * (lin + quad))
    d_psi = math.fsum(snap.per_bin_psi * (-lin + quad))
    return d_phi, d_psi, d_phi + d_psi


def verify_main_theorem(p: ProbabilityVector, y, alpha: float, epsilon: float,
                        delta: float, K: float) -> tuple[bool, float, float]:
    """Check the deterministic drift inequality on one load vector.

    Requires p to satisfy the prefix/suffix condition for (delta, epsilon) and
    0 < alpha < min(1, eps*delta/(8K)).  Returns (holds, lhs, rhs) for
    dGamma_bar <= -(eps*delta/8)(alpha/n) Gamma + c(delta) eps alpha.
    """
    report = check_C1(p, delta, epsilon)
    if not report.holds:
        raise PreconditionViolated(
            f"p violates the prefix/suffix condition at k={report.witness_k}")
    if not (0.0 < alpha < min(1.0, epsilon * delta / (8.0 * K))):
        raise PreconditionViolated("alpha out of range (0, min(1, eps*delta/(8K)))")
    snap = hyperbolic_potential(y, alpha)
    _, _, lhs = drift_upper_bounds(p, snap, alpha, K)
    rhs = -(epsilon * delta / 8.0) * (alpha / snap.n) * snap.gamma_total \
        + c_delta(delta) * epsilon * alpha
    holds = lhs <= rhs + 1e-9 * max(1.0, abs(lhs), abs(rhs))
    return holds, lhs, rhs


@dataclass(frozen=True)
class BatchMomentResult:
    """Monte Carlo estimates of the one-batch potential moments."""

    alpha: float
    mean_phi: np.ndarray        # per-bin estimates of E[Phi_i^{t+b}]
    mean_psi: np.ndarray
    se_phi: np.ndarray
    se_psi: np.ndarray
    bound_phi: np.ndarray       # per-bin moment-bound right-hand sides
    bound_psi: np.ndarray
    agg_se_phi: float           # standard error of the per-trial aggregates
    agg_se_psi: float

    def aggregate_within_bound(self, sigmas: float = 3.0) -> tuple[bool, bool]:
        phi_ok = math.fsum(self.mean_phi) <= math.fsum(self.bound_phi) \
            + sigmas * self.agg_se_phi
        psi_ok = math.fsum(self.mean_psi) <= math.fsum(self.bound_psi) \
            + sigmas * self.agg_se_psi
        return phi_ok, psi_ok


def monte_carlo_batch_moment(spec: ProcessSpec, state: LoadState, b: int,
                             weights: WeightDistribution, alpha: float,
                             trials: int, rng: np.random.Generator,
                             C: float | None = None) -> BatchMomentResult:
    """Estimate E[Phi_i^{t+b}] and E[Psi_i^{t+b}] over fresh batches from a
    frozen state, against the one-batch moment bound

        sum_i Phi_i (1 + (p_i - 1/n) alpha b + 5 C^2 S^2 (b/n)(alpha^2/n) b).

    Requires alpha <= n/(2 C S b).  b = 0 returns the current values exactly.
    """
    n = state.n
    p = probability_vector(spec, n)
    if C is None:
        C = float(np.max(p.p)) * n
    S = moment_bound_S(weights)
    if b > 0 and alpha > n / (2.0 * C * S * b):
        raise PreconditionViolated(f"alpha must be <= n/(2CSb) = {n / (2 * C * S * b):.3g}")

    order = rank_order(state.loads)
    y = state.loads[order] - state.total_weight / n
    snap = hyperbolic_potential(y, alpha)

    lin = (p.p - 1.0 / n) * alpha * b
    quad = 5.0 * C * C * S * S * (b / n) * (alpha * alpha / n) * b
    bound_phi = snap.per_bin_phi * (1.0 + lin + quad)
    bound_psi = snap.per_bin_psi * (1.0 - lin + quad)

    if b == 0:
        zeros = np.zeros(n)
        return BatchMomentResult(alpha, snap.per_bin_phi.copy(), snap.per_bin_psi.copy(),
                                 zeros, zeros.copy(), bound_phi, bound_psi, 0.0, 0.0)

    if weights.kind == "Unit":
        counts = rng.multinomial(b, p.p, size=trials).astype(np.float64)
        batch_w = np.full(trials, float(b))
    else:
        ranks = np.searchsorted(np.cumsum(p.p), rng.random((trials, b)), side="right")
        ranks = np.minimum(ranks, n - 1)
        w = weights.sample(rng, (trials, b))
        counts = np.zeros((trials, n))
        rows = np.repeat(np.arange(trials), b)
        np.add.at(counts, (rows, ranks.ravel()), w.ravel())
        batch_w = w.sum(axis=1)

    y_next = y[None, :] + counts - batch_w[:, None] / n
    phi_t = np.exp(alpha * y_next)
    psi_t = np.exp(-alpha * y_next)
    mean_phi = phi_t.mean(axis=0)
    mean_psi = psi_t.mean(axis=0)
    se_phi = phi_t.std(axis=0, ddof=1) / math.sqrt(trials)
    se_psi = psi_t.std(axis=0, ddof=1) / math.sqrt(trials)
    agg_se_phi = float(phi_t.sum(axis=1).std(ddof=1) / math.sqrt(trials))
    agg_se_psi = float(psi_t.sum(axis=1).std(ddof=1) / math.sqrt(trials))
    return BatchMomentResult(alpha, mean_phi, mean_psi, se_phi, se_psi,
                             bound_phi, bound_psi, agg_se_phi, agg_se_psi)
