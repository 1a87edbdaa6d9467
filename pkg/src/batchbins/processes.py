"""Allocation processes as probability vectors over load ranks, plus the
prefix/suffix-sum conditions that certify a bias away from heavy bins.

Rank 1 (storage index 0) is the most loaded bin.  Vectors are built with
exact rational arithmetic and rounded once to float64, so closed-form entries
match their decimal values exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import InvalidParameter

__all__ = [
    "ProbabilityVector",
    "ProcessSpec",
    "ConditionReport",
    "probability_vector",
    "tie_break_average",
    "check_D0",
    "check_D1",
    "check_D2",
    "check_C1",
    "check_C2",
    "majorizes",
    "worst_case_vector",
]

# Absolute tolerance for prefix-sum comparisons: vectors are exact rationals
# in closed form, so this only needs to cover float accumulation.
def _tol(n: int) -> float:
    return 1e-12 * n


@dataclass(frozen=True)
class ProbabilityVector:
    """Non-negative vector over ranks summing to 1 (rank 1 = most loaded)."""

    p: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.p, dtype=np.float64))
        object.__setattr__(self, "p", p)
        if len(p) < 1:
            raise InvalidParameter("probability vector must be non-empty")
        if np.any(p < 0):
            raise InvalidParameter("probabilities must be non-negative")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise InvalidParameter("probabilities must sum to 1 within 1e-12")

    @property
    def n(self) -> int:
        return len(self.p)

    def prefix_sums(self) -> np.ndarray:
        return np.cumsum(self.p)


def _fraction_param(x: float) -> Fraction:
    # str() gives the shortest round-trip decimal, recovering exact values
    # for parameters written as decimals (0.4 -> 2/5).
    return Fraction(str(float(x)))


def _quantile_rank(delta: float, n: int) -> int:
    """Number of top ranks covered by a Quantile(delta) first sample."""
    k = round(delta * n)
    if abs(delta * n - k) > 1e-6 or not (1 <= k <= n):
        raise InvalidParameter(f"delta*n must be integral in [1, n]; got delta={delta}, n={n}")
    return k


@dataclass(frozen=True)
class ProcessSpec:
    """Tagged description of an allocation process.

    kind is one of OneChoice, DChoice (d >= 2), OnePlusBeta (beta in (0,1]),
    Quantile (delta in {1/n, ..., 1}) or Graphical.  tie_breaking selects
    between the fixed (load, bin-index) rank order and random tie-breaking.
    """

    kind: str
    d: int | None = None
    beta: float | None = None
    delta: float | None = None
    graph: object | None = None  # graphs.RegularGraph for kind == "Graphical"
    tie_breaking: str = "deterministic"

    def __post_init__(self):
        if self.tie_breaking not in ("deterministic", "random"):
            raise InvalidParameter(f"unknown tie_breaking {self.tie_breaking!r}")
        if self.kind == "DChoice":
            if self.d is None or self.d < 2:
                raise InvalidParameter("DChoice requires d >= 2")
        elif self.kind == "OnePlusBeta":
            if self.beta is None or not (0.0 < self.beta <= 1.0):
                raise InvalidParameter("OnePlusBeta requires beta in (0, 1]")
        elif self.kind == "Quantile":
            if self.delta is None or not (0.0 < self.delta <= 1.0):
                raise InvalidParameter("Quantile requires delta in (0, 1]")
        elif self.kind == "Graphical":
            if self.graph is None:
                raise InvalidParameter("Graphical requires a graph")
        elif self.kind != "OneChoice":
            raise InvalidParameter(f"unknown process kind {self.kind!r}")

    @classmethod
    def one_choice(cls, tie_breaking: str = "deterministic") -> "ProcessSpec":
        return cls("OneChoice", tie_breaking=tie_breaking)

    @classmethod
    def two_choice(cls, tie_breaking: str = "deterministic") -> "ProcessSpec":
        return cls("DChoice", d=2, tie_breaking=tie_breaking)

    @classmethod
    def three_choice(cls, tie_breaking: str = "deterministic") -> "ProcessSpec":
        return cls("DChoice", d=3, tie_breaking=tie_breaking)

    @classmethod
    def d_choice(cls, d: int, tie_breaking: str = "deterministic") -> "ProcessSpec":
        return cls("DChoice", d=d, tie_breaking=tie_breaking)

    @classmethod
    def one_plus_beta(cls, beta: float, tie_breaking: str = "deterministic") -> "ProcessSpec":
        return cls("OnePlusBeta", beta=beta, tie_breaking=tie_breaking)

    @classmethod
    def quantile(cls, delta: float, tie_breaking: str = "deterministic") -> "ProcessSpec":
        return cls("Quantile", delta=delta, tie_breaking=tie_breaking)

    @classmethod
    def graphical(cls, graph, tie_breaking: str = "random") -> "ProcessSpec":
        return cls("Graphical", graph=graph, tie_breaking=tie_breaking)

    def label(self) -> str:
        if self.kind == "DChoice":
            name = {2: "TwoChoice", 3: "ThreeChoice"}.get(self.d, f"DChoice({self.d})")
        elif self.kind == "OnePlusBeta":
            name = f"OnePlusBeta({self.beta:g})"
        elif self.kind == "Quantile":
            name = f"Quantile({self.delta:g})"
        elif self.kind == "Graphical":
            name = f"Graphical(n={self.graph.n},d={self.graph.d})"
        else:
            name = self.kind
        if self.tie_breaking == "random":
            name += "+rt"
        return name

    def to_dict(self) -> dict:
        params = {}
        if self.d is not None:
            params["d"] = self.d
        if self.beta is not None:
            params["beta"] = self.beta
        if self.delta is not None:
            params["delta"] = self.delta
        if self.graph is not None:
            params["graph"] = self.graph.to_dict()
        return {"kind": self.kind, "params": params, "tie_breaking": self.tie_breaking}

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessSpec":
        extra = set(d) - {"kind", "params", "tie_breaking"}
        if extra:
            raise InvalidParameter(f"unknown process keys {sorted(extra)}")
        params = dict(d.get("params", {}))
        graph = None
        if "graph" in params:
            from .graphs import RegularGraph

            graph = RegularGraph.from_dict(params.pop("graph"))
        extra = set(params) - {"d", "beta", "delta"}
        if extra:
            raise InvalidParameter(f"unknown process params {sorted(extra)}")
        kind = d["kind"]
        if kind == "TwoChoice":
            kind, params = "DChoice", {"d": 2, **params}
        elif kind == "ThreeChoice":
            kind, params = "DChoice", {"d": 3, **params}
        return cls(kind, graph=graph, tie_breaking=d.get("tie_breaking", "deterministic"),
                   **params)


@dataclass(frozen=True)
class ConditionReport:
    """Result of a condition check, with the first failing rank as witness."""

    holds: bool
    delta: float | None = None
    epsilon: float | None = None
    C: float | None = None
    witness_k: int | None = None
    witness_value: float | None = None

    def __post_init__(self):
        if not self.holds and self.witness_k is None:
            raise InvalidParameter("failing report must carry a witness")

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "C": self.C,
            "witness_k": self.witness_k,
            "witness_value": self.witness_value,
        }


def probability_vector(spec: ProcessSpec, n: int) -> ProbabilityVector:
    """Exact closed-form probability vector of a (non-graphical) process.

    OneChoice is uniform; DChoice(d) has p_i = (i^d - (i-1)^d) / n^d, whose
    d = 2 case matches the TwoChoice values of the reference plots;
    OnePlusBeta mixes uniform with the d = 2 vector; Quantile(delta) puts
    delta/n on the top delta*n ranks and (1+delta)/n below.
    """
    if n < 2:
        raise InvalidParameter("n must be >= 2")
    if spec.kind == "Graphical":
        raise InvalidParameter("Graphical vectors depend on the load state; "
                               "use graphs.graphical_probability_vector")
    if spec.kind == "OneChoice":
        fr = [Fraction(1, n)] * n
    elif spec.kind == "DChoice":
        d = spec.d
        fr = [Fraction(i**d - (i - 1) ** d, n**d) for i in range(1, n + 1)]
    elif spec.kind == "OnePlusBeta":
        beta = _fraction_param(spec.beta)
        fr = [(1 - beta) * Fraction(1, n) + beta * Fraction(2 * i - 1, n * n)
              for i in range(1, n + 1)]
    else:  # Quantile
        k = _quantile_rank(spec.delta, n)
        delta = Fraction(k, n)
        fr = [delta / n] * k + [(1 + delta) / n] * (n - k)
    return ProbabilityVector(np.array([float(v) for v in fr]))


def tie_break_average(p: ProbabilityVector, y) -> ProbabilityVector:
    """Average p over each maximal block of equal y values.

    This is the vector of the random tie-breaking variant: within a block of
    equally loaded bins every rank is equally likely.  The total is preserved
    and no entry can rise above the previous maximum.
    """
    yv = np.asarray(getattr(y, "y", y), dtype=np.float64)
    if len(yv) != p.n:
        raise InvalidParameter("p and y must have the same length")
    starts = np.flatnonzero(np.r_[True, np.diff(yv) != 0])
    sums = np.add.reduceat(p.p, starts)
    counts = np.diff(np.r_[starts, len(yv)])
    means = sums / counts
    # Guard against the block mean rounding a hair above the block max.
    block_max = np.maximum.reduceat(p.p, starts)
    means = np.minimum(means, block_max)
    return ProbabilityVector(np.repeat(means, counts))


def _check_cap(p: ProbabilityVector, C: float, delta=None, epsilon=None) -> ConditionReport:
    cap = C / p.n
    k = int(np.argmax(p.p))
    value = float(p.p[k])
    holds = value <= cap + _tol(p.n)
    return ConditionReport(holds=holds, delta=delta, epsilon=epsilon, C=C,
                           witness_k=k + 1 if not holds else None,
                           witness_value=value if not holds else None)


def check_D0(p: ProbabilityVector) -> ConditionReport:
    """p must be non-decreasing in the rank index."""
    diffs = np.diff(p.p)
    bad = np.flatnonzero(diffs < -_tol(p.n))
    if len(bad) == 0:
        return ConditionReport(holds=True)
    k = int(bad[0])
    return ConditionReport(holds=False, witness_k=k + 1, witness_value=float(diffs[k]))


def _delta_rank(delta: float, n: int) -> int:
    if not (0.0 < delta < 1.0):
        raise InvalidParameter("delta must be in (0, 1)")
    k = math.floor(delta * n + 1e-9)
    if k == 0:
        raise InvalidParameter(f"floor(delta*n) = 0 for delta={delta}, n={n}")
    return k


def check_D1(p: ProbabilityVector, delta: float, epsilon: float) -> ConditionReport:
    """p_{delta n} <= (1 - epsilon)/n at the rank floor(delta*n)."""
    if not (0.0 < epsilon < 1.0):
        raise InvalidParameter("epsilon must be in (0, 1)")
    k = _delta_rank(delta, p.n)
    bound = (1.0 - epsilon) / p.n
    value = float(p.p[k - 1])
    holds = value <= bound + _tol(p.n)
    return ConditionReport(holds=holds, delta=delta, epsilon=epsilon,
                           witness_k=k if not holds else None,
                           witness_value=value if not holds else None)


def check_D2(p: ProbabilityVector, C: float) -> ConditionReport:
    """max_i p_i <= C/n."""
    return _check_cap(p, C)


def check_C1(p: ProbabilityVector, delta: float, epsilon: float) -> ConditionReport:
    """Prefix sums below (1-eps)k/n up to rank delta*n, suffix sums above
    (1 + eps*delta/(1-delta)) * (n-k+1)/n after it."""
    if not (0.0 < epsilon < 1.0):
        raise InvalidParameter("epsilon must be in (0, 1)")
    n = p.n
    kd = _delta_rank(delta, n)
    tol = _tol(n)
    prefix = np.cumsum(p.p)
    for k in range(1, kd + 1):
        bound = (1.0 - epsilon) * k / n
        if prefix[k - 1] > bound + tol:
            return ConditionReport(holds=False, delta=delta, epsilon=epsilon,
                                   witness_k=k, witness_value=float(prefix[k - 1]))
    suffix = np.cumsum(p.p[::-1])[::-1]
    factor = 1.0 + epsilon * delta / (1.0 - delta)
    for k in range(kd + 1, n + 1):
        bound = factor * (n - k + 1) / n
        if suffix[k - 1] < bound - tol:
            return ConditionReport(holds=False, delta=delta, epsilon=epsilon,
                                   witness_k=k, witness_value=float(suffix[k - 1]))
    return ConditionReport(holds=True, delta=delta, epsilon=epsilon)


def check_C2(p: ProbabilityVector, C: float) -> ConditionReport:
    """max_i p_i <= C/n with C > 1."""
    if not (C > 1.0):
        raise InvalidParameter("C must be > 1")
    return _check_cap(p, C)


def majorizes(p: ProbabilityVector, q: ProbabilityVector) -> bool:
    """True iff every prefix sum of p dominates the prefix sum of q."""
    if p.n != q.n:
        raise InvalidParameter("vectors must share n")
    diff = np.cumsum(p.p) - np.cumsum(q.p)
    return bool(np.all(diff >= -_tol(p.n)))


def worst_case_vector(n: int, delta: float, epsilon: float) -> ProbabilityVector:
    """The drift-maximizing vector: (1-eps)/n on the top delta*n ranks and
    (1 + eps*delta/(1-delta))/n below.

    Any vector satisfying C1(delta, eps) is majorized by it, which is what
    reduces the deterministic drift theorem to this single vector.
    """
    if n < 2:
        raise InvalidParameter("n must be >= 2")
    fd = _fraction_param(delta)
    fe = _fraction_param(epsilon)
    if not (0 < fd < 1) or not (0 < fe < 1):
        raise InvalidParameter("delta and epsilon must be in (0, 1)")
    k = fd * n
    if k.denominator != 1:
        raise InvalidParameter(f"delta*n must be integral; got {delta} * {n}")
    k = int(k)
    low = (1 - fe) / n
    high = (1 + fe * fd / (1 - fd)) / n
    fr = [low] * k + [high] * (n - k)
    return ProbabilityVector(np.array([float(v) for v in fr]))
