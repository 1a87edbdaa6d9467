"""The batched allocation engine.

Each batch of b balls is allocated against the load snapshot frozen at the
batch's start: ranks are sampled from the process's probability vector (or
edges are sampled for graphical allocation), weights are drawn, and the loads
are only updated once the whole batch has been placed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    InvalidParameter,
    LoadState,
    NeumaierSum,
    RngSeedPlan,
    WeightDistribution,
    rank_order,
)
from .potentials import PotentialParams, hyperbolic_potential, lambda_potential
from .processes import ProcessSpec, probability_vector, tie_break_average

__all__ = [
    "MismatchedTraces",
    "BatchRunConfig",
    "TraceEntry",
    "RunTrace",
    "AliasTable",
    "CdfSampler",
    "make_sampler",
    "run_batch",
    "run",
    "gap_statistics",
    "GapSummary",
    "state_digest",
]


class MismatchedTraces(ValueError):
    """Traces passed to an aggregate do not share the same shape."""


@dataclass(frozen=True)
class BatchRunConfig:
    """One simulation run: m balls in batches of b into n bins."""

    n: int
    b: int
    m: int
    process: ProcessSpec
    weights: WeightDistribution
    seed_plan: RngSeedPlan
    record_potentials: PotentialParams | None = None
    midbatch_samples: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameter("n must be >= 2")
        if self.b < 1:
            raise InvalidParameter("b must be >= 1")
        if self.m % self.b != 0:
            raise InvalidParameter("m must be a multiple of b")
        if self.midbatch_samples < 0:
            raise InvalidParameter("midbatch_samples must be >= 0")


@dataclass(frozen=True)
class TraceEntry:
    step: int
    gap: float
    min_y: float
    gamma: float | None = None
    lam: float | None = None


@dataclass(frozen=True)
class RunTrace:
    """Per-batch-boundary observations plus optional mid-batch gap samples."""

    boundaries: tuple
    midbatch: tuple
    final_state_digest: int

    def __post_init__(self):
        steps = [e.step for e in self.boundaries]
        if any(s2 <= s1 for s1, s2 in zip(steps, steps[1:])):
            raise InvalidParameter("boundary steps must be strictly increasing")

    @property
    def final_gap(self) -> float:
        return self.boundaries[-1].gap

    @property
    def final_min_y(self) -> float:
        return self.boundaries[-1].min_y


class AliasTable:
    """Vose alias table: O(n) build, two uniforms per draw."""

    def __init__(self, p: np.ndarray):
        p = np.asarray(p, dtype=np.float64)
        n = len(p)
        scaled = p * n
        self.prob = np.ones(n)
        self.alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] = (scaled[l] + scaled[s]) - 1.0
            (small if scaled[l] < 1.0 else large).append(l)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        kk = rng.integers(0, len(self.prob), size=size)
        accept = rng.random(size) < self.prob[kk]
        return np.where(accept, kk, self.alias[kk])


class CdfSampler:
    """Inverse-CDF sampling; cheaper to build when b is small."""

    def __init__(self, p: np.ndarray):
        self.cdf = np.cumsum(np.asarray(p, dtype=np.float64))
        self.cdf[-1] = 1.0
        self._n = len(self.cdf)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = np.searchsorted(self.cdf, rng.random(size), side="right")
        return np.minimum(idx, self._n - 1)


def make_sampler(p: np.ndarray, b: int):
    # The alias table pays off once a batch is at least vector-sized.
    return AliasTable(p) if b >= len(p) else CdfSampler(p)


def state_digest(loads: np.ndarray) -> int:
    """64-bit checksum of the load vector."""
    h = hashlib.blake2b(np.ascontiguousarray(loads, dtype=np.float64).tobytes(),
                        digest_size=8)
    return int.from_bytes(h.digest(), "big")


class _Engine:
    """Per-run state: cached samplers and the compensated weight total."""

    def __init__(self, state: LoadState, spec: ProcessSpec,
                 weights: WeightDistribution, rng: np.random.Generator):
        self.state = state
        self.spec = spec
        self.weights = weights
        self.rng = rng
        self.w_total = NeumaierSum(state.total_weight)
        self._static_sampler = None
        if spec.kind != "Graphical":
            self._base_p = probability_vector(spec, state.n)

    def _draw_bins(self, b: int) -> np.ndarray:
        """Sample the b destination bins against the frozen snapshot."""
        state, spec, rng = self.state, self.spec, self.rng
        if spec.kind == "Graphical":
            e = spec.graph.edge_array()
            eidx = rng.integers(0, len(e), size=b)
            u, v = e[eidx, 0], e[eidx, 1]
            lu, lv = state.loads[u], state.loads[v]
            bins = np.where(lu < lv, u, v)
            ties = lu == lv
            if np.any(ties):
                if spec.tie_breaking == "random":
                    coin = rng.integers(0, 2, size=int(ties.sum())).astype(bool)
                    bins[ties] = np.where(coin, u[ties], v[ties])
                else:
                    # Fixed order ranks the higher index as less loaded on a
                    # tie, matching the (load, bin-index) rank sort.
                    bins[ties] = np.maximum(u[ties], v[ties])
            return bins
        order = rank_order(state.loads)
        if spec.tie_breaking == "random":
            y = state.loads[order] - state.total_weight / state.n
            p = tie_break_average(self._base_p, y)
            sampler = make_sampler(p.p, b)
        else:
            if self._static_sampler is None:
                self._static_sampler = make_sampler(self._base_p.p, b)
            sampler = self._static_sampler
        return order[sampler.draw(self.rng, b)]

    def run_batch(self, b: int, sample_steps: tuple = ()) -> list:
        """Allocate one batch; optionally record gaps at interior steps."""
        if b == 0:
            return []
        state = self.state
        bins = self._draw_bins(b)
        w = self.weights.sample(self.rng, b)
        mid = []
        if sample_steps:
            prev = 0
            for s in sample_steps:
                seg = slice(prev, s)
                state.loads += np.bincount(bins[seg], weights=w[seg], minlength=state.n)
                self.w_total.add(float(np.sum(w[seg])))
                state.total_weight = self.w_total.value
                mid.append((state.step + s,
                            float(np.max(state.loads) - state.total_weight / state.n)))
                prev = s
            seg = slice(prev, b)
            state.loads += np.bincount(bins[seg], weights=w[seg], minlength=state.n)
            self.w_total.add(float(np.sum(w[seg])))
        else:
            state.loads += np.bincount(bins, weights=w, minlength=state.n)
            self.w_total.add(float(np.sum(w)))
        state.total_weight = self.w_total.value
        state.step += b
        return mid


def run_batch(state: LoadState, spec: ProcessSpec, b: int,
              weights: WeightDistribution, rng: np.random.Generator) -> LoadState:
    """Allocate exactly b balls against the snapshot frozen at entry.

    The probability vector (or the graphical comparison snapshot) is fixed at
    the start of the batch; no load information is updated mid-batch.  b = 0
    leaves the state unchanged.
    """
    if b < 0:
        raise InvalidParameter("b must be >= 0")
    _Engine(state, spec, weights, rng).run_batch(b)
    return state


def _boundary_entry(state: LoadState, params: PotentialParams | None) -> TraceEntry:
    avg = state.total_weight / state.n
    gap_v = float(np.max(state.loads) - avg)
    min_y = float(np.min(state.loads) - avg)
    gamma = lam = None
    if params is not None:
        y = np.sort(state.loads)[::-1] - avg
        gamma = hyperbolic_potential(y, params.alpha).gamma_total
        if params.gamma is not None and params.k_threshold is not None:
            lam = lambda_potential(y, params.gamma, params.k_threshold)
    return TraceEntry(step=state.step, gap=gap_v, min_y=min_y, gamma=gamma, lam=lam)


def run(config: BatchRunConfig) -> RunTrace:
    """Execute m/b batches and record the trace at every batch boundary.

    If midbatch_samples > 0, the gap is additionally recorded at that many
    evenly spaced interior steps of the final batch.
    """
    state = LoadState.empty(config.n)
    rng = config.seed_plan.generator()
    engine = _Engine(state, config.process, config.weights, rng)
    boundaries = [_boundary_entry(state, config.record_potentials)]
    midbatch = []
    num_batches = config.m // config.b
    for j in range(num_batches):
        sample_steps = ()
        if config.midbatch_samples > 0 and j == num_batches - 1:
            k = config.midbatch_samples
            steps = {math.floor(i * config.b / (k + 1)) for i in range(1, k + 1)}
            sample_steps = tuple(sorted(s for s in steps if 1 <= s < config.b))
        midbatch.extend(engine.run_batch(config.b, sample_steps))
        boundaries.append(_boundary_entry(state, config.record_potentials))
    return RunTrace(boundaries=tuple(boundaries), midbatch=tuple(midbatch),
                    final_state_digest=state_digest(state.loads))


@dataclass(frozen=True)
class GapSummary:
    """Per-boundary aggregates over a set of traces."""

    steps: np.ndarray
    mean: np.ndarray
    std: np.ndarray          # population standard deviation
    min: np.ndarray
    max: np.ndarray
    quantiles: dict


def gap_statistics(traces, quantiles=(0.25, 0.5, 0.75)) -> GapSummary:
    """Aggregate boundary gaps across runs sharing one config shape."""
    if not traces:
        raise MismatchedTraces("no traces given")
    steps = [e.step for e in traces[0].boundaries]
    for t in traces[1:]:
        if [e.step for e in t.boundaries] != steps:
            raise MismatchedTraces("traces have differing boundary steps")
    gaps = np.array([[e.gap for e in t.boundaries] for t in traces])
    qs = {q: np.quantile(gaps, q, axis=0) for q in quantiles}
    return GapSummary(steps=np.asarray(steps), mean=gaps.mean(axis=0),
                      std=gaps.std(axis=0), min=gaps.min(axis=0),
                      max=gaps.max(axis=0), quantiles=qs)
