"""Core domain types: load states, normalized load vectors, ball-weight
distributions with analytic MGFs, and deterministic RNG stream derivation.

Loads are kept in ball-weight units.  The normalized load of bin i after a
total weight W has been allocated is ``x_i - W/n``; the sorted (non-increasing)
normalized vector y has y_1 equal to the gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "InvalidParameter",
    "PreconditionViolated",
    "mix64",
    "RngSeedPlan",
    "NeumaierSum",
    "LoadState",
    "NormalizedLoads",
    "WeightDistribution",
    "rank_order",
    "normalize_and_sort",
    "gap",
    "sample_weight",
    "mgf",
    "moment_bound_S",
]


class DomainError(ValueError):
    """An MGF was evaluated outside its finiteness domain."""


class InvalidParameter(ValueError):
    """A parameter lies outside its documented range."""


class PreconditionViolated(RuntimeError):
    """An operation's stated precondition does not hold."""


_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15  # floor(2^64 / golden ratio), odd


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a published full-avalanche 64-bit integer mix."""
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngSeedPlan:
    """Deterministic derivation of per-run RNG streams.

    ``child_seed = mix64(master_seed XOR golden * (run_index + 1))``; the same
    (master_seed, run_index) always yields a bit-identical stream.
    """

    master_seed: int
    run_index: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed <= _M64):
            raise InvalidParameter("master_seed must fit in 64 bits")
        if self.run_index < 0:
            raise InvalidParameter("run_index must be >= 0")

    def child_seed(self) -> int:
        return mix64(self.master_seed ^ ((_GOLDEN * (self.run_index + 1)) & _M64))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.child_seed()))


class NeumaierSum:
    """Compensated (Neumaier) accumulator for long running sums.

    Keeps the running total accurate to a few ulps over tens of millions of
    additions, which is what the sum(loads) == total_weight invariant needs.
    """

    __slots__ = ("_s", "_c")

    def __init__(self, value: float = 0.0):
        self._s = float(value)
        self._c = 0.0

    def add(self, x: float) -> "NeumaierSum":
        t = self._s + x
        if abs(self._s) >= abs(x):
            self._c += (self._s - t) + x
        else:
            self._c += (x - t) + self._s
        self._s = t
        return self

    @property
    def value(self) -> float:
        return self._s + self._c


@dataclass
class LoadState:
    """Bin loads in ball-weight units, plus the running totals.

    Mutable, but confined to a single simulation run; every other domain type
    is immutable after construction.
    """

    loads: np.ndarray
    total_weight: float
    step: int

    @classmethod
    def empty(cls, n: int) -> "LoadState":
        if n < 1:
            raise InvalidParameter("n must be >= 1")
        return cls(loads=np.zeros(n, dtype=np.float64), total_weight=0.0, step=0)

    @property
    def n(self) -> int:
        return len(self.loads)

    def validate(self) -> None:
        if self.step < 0:
            raise InvalidParameter("step must be >= 0")
        if np.any(self.loads < 0):
            raise InvalidParameter("loads must be non-negative")
        total = math.fsum(self.loads)
        tol = 1e-9 * max(1.0, abs(self.total_weight))
        if abs(total - self.total_weight) > tol:
            raise InvalidParameter(
                f"sum(loads)={total!r} does not match total_weight={self.total_weight!r}"
            )

    def copy(self) -> "LoadState":
        return LoadState(self.loads.copy(), self.total_weight, self.step)


@dataclass(frozen=True)
class NormalizedLoads:
    """Sorted non-increasing normalized load vector y with sum(y) ~ 0."""

    y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.y)

    def validate(self) -> None:
        if np.any(np.diff(self.y) > 0):
            raise InvalidParameter("y must be sorted non-increasing")
        if abs(math.fsum(self.y)) > 1e-6 * self.n:
            raise InvalidParameter("y must sum to zero within 1e-6 * n")


def rank_order(loads: np.ndarray) -> np.ndarray:
    """Bin indices ordered from most to least loaded.

    Equal loads are ordered by bin index, giving the fixed deterministic
    tie order used by the engine's non-random tie-breaking mode.
    """
    loads = np.asarray(loads)
    return np.lexsort((np.arange(len(loads)), -loads))


def normalize_and_sort(state: LoadState) -> NormalizedLoads:
    """Subtract the average load and sort non-increasingly."""
    avg = state.total_weight / state.n
    y = state.loads[rank_order(state.loads)] - avg
    return NormalizedLoads(y=y)


def gap(state: LoadState) -> float:
    """Max load minus average load; equals y_1 of the normalized vector."""
    return float(np.max(state.loads) - state.total_weight / state.n)


# Weight distribution kinds.
UNIT = "Unit"
EXPONENTIAL = "Exponential"
SCALED_GEOMETRIC = "ScaledGeometric"
UNIFORM_BOUNDED = "UniformBounded"

_KINDS = (UNIT, EXPONENTIAL, SCALED_GEOMETRIC, UNIFORM_BOUNDED)


@dataclass(frozen=True)
class WeightDistribution:
    """Ball-weight law with mean exactly 1 and an analytic MGF.

    ``lambda_`` is the MGF parameter used by the moment bound; it must lie
    strictly inside the kind-specific finiteness domain.  Defaults:
    Unit -> 1.0, Exponential -> 0.5, ScaledGeometric -> ln(1/(1-q))/2,
    UniformBounded -> 1.0.
    """

    kind: str
    lambda_: float
    q: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidParameter(f"unknown weight distribution kind {self.kind!r}")
        if self.kind == SCALED_GEOMETRIC:
            if self.q is None or not (0.0 < self.q < 1.0):
                raise InvalidParameter("ScaledGeometric requires q in (0, 1)")
        elif self.q is not None:
            raise InvalidParameter(f"{self.kind} takes no q parameter")
        if not (self.lambda_ > 0.0):
            raise InvalidParameter("lambda must be > 0")
        if self.lambda_ >= self.mgf_domain_sup():
            raise InvalidParameter(
                f"lambda={self.lambda_} not inside the MGF domain of {self.kind}"
            )

    @classmethod
    def unit(cls, lambda_: float = 1.0) -> "WeightDistribution":
        return cls(UNIT, lambda_)

    @classmethod
    def exponential(cls, lambda_: float = 0.5) -> "WeightDistribution":
        return cls(EXPONENTIAL, lambda_)

    @classmethod
    def scaled_geometric(cls, q: float, lambda_: float | None = None) -> "WeightDistribution":
        if not (0.0 < q < 1.0):
            raise InvalidParameter("ScaledGeometric requires q in (0, 1)")
        if lambda_ is None:
            lambda_ = math.log(1.0 / (1.0 - q)) / 2.0
        return cls(SCALED_GEOMETRIC, lambda_, q=q)

    @classmethod
    def uniform_bounded(cls, lambda_: float = 1.0) -> "WeightDistribution":
        return cls(UNIFORM_BOUNDED, lambda_)

    def mgf_domain_sup(self) -> float:
        """Supremum of z for which E[e^{zW}] is finite."""
        if self.kind == EXPONENTIAL:
            return 1.0
        if self.kind == SCALED_GEOMETRIC:
            # W = q*G with G ~ Geom(q); finite iff (1-q) e^{qz} < 1.
            return -math.log(1.0 - self.q) / self.q
        return math.inf

    def mean(self) -> float:
        return 1.0

    def variance(self) -> float:
        if self.kind == UNIT:
            return 0.0
        if self.kind == EXPONENTIAL:
            return 1.0
        if self.kind == SCALED_GEOMETRIC:
            return 1.0 - self.q
        return 1.0 / 3.0  # Uniform[0, 2]

    def mgf(self, z: float) -> float:
        """Closed-form E[e^{zW}]; raises DomainError where it diverges."""
        if z >= self.mgf_domain_sup():
            raise DomainError(f"MGF of {self.kind} diverges at z={z}")
        if z == 0.0:
            return 1.0
        if self.kind == UNIT:
            return math.exp(z)
        if self.kind == EXPONENTIAL:
            return 1.0 / (1.0 - z)
        if self.kind == SCALED_GEOMETRIC:
            q = self.q
            e = math.exp(q * z)
            return q * e / (1.0 - (1.0 - q) * e)
        # Uniform on [0, 2]: (e^{2z} - 1) / (2z).
        return math.expm1(2.0 * z) / (2.0 * z)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if self.kind == UNIT:
            return np.ones(size) if size is not None else 1.0
        if self.kind == EXPONENTIAL:
            return rng.exponential(1.0, size)
        if self.kind == SCALED_GEOMETRIC:
            return self.q * rng.geometric(self.q, size)
        return rng.uniform(0.0, 2.0, size)

    def label(self) -> str:
        if self.kind == SCALED_GEOMETRIC:
            return f"ScaledGeometric({self.q:g})"
        return self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "lambda": self.lambda_}
        if self.q is not None:
            d["q"] = self.q
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WeightDistribution":
        extra = set(d) - {"kind", "lambda", "q"}
        if extra:
            raise InvalidParameter(f"unknown weight keys {sorted(extra)}")
        kind = d.get("kind", UNIT)
        lam = d.get("lambda")
        q = d.get("q")
        if kind == SCALED_GEOMETRIC:
            return cls.scaled_geometric(q, lam)
        if lam is None:
            return {UNIT: cls.unit, EXPONENTIAL: cls.exponential,
                    UNIFORM_BOUNDED: cls.uniform_bounded}[kind]()
        return cls(kind, lam)


def sample_weight(dist: WeightDistribution, rng: np.random.Generator) -> float:
    return float(dist.sample(rng))


def mgf(dist: WeightDistribution, z: float) -> float:
    return dist.mgf(z)


def moment_bound_S(dist: WeightDistribution) -> float:
    """Second-order moment constant S(lambda) for the weight distribution.

    S := 2 * max( (8/lambda * ln(8/lambda))^4, 2 * E[e^{lambda W}], 1/2 );
    always >= max(1, 1/lambda).
    """
    lam = dist.lambda_
    t1 = (8.0 / lam * math.log(8.0 / lam)) ** 4
    t2 = 2.0 * dist.mgf(lam)
    return 2.0 * max(t1, t2, 0.5)
