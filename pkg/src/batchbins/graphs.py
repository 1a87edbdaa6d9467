"""Regular graphs for graphical allocation: generators, exact conductance by
subset enumeration, and the load-dependent edge-sampling probability vector
with its prefix/suffix expansion bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidParameter
from .processes import ConditionReport, ProbabilityVector

__all__ = [
    "GenerationFailure",
    "TooLarge",
    "RegularGraph",
    "ConductanceResult",
    "cycle",
    "hypercube",
    "complete",
    "random_regular",
    "generate",
    "conductance_exact",
    "cut_ratio",
    "graphical_rank_counts",
    "graphical_probability_vector",
    "verify_expansion_bounds",
    "read_edge_list",
    "write_edge_list",
]

_MAX_EXACT_N = 24


class GenerationFailure(RuntimeError):
    """Pairing-model generation did not produce a simple connected graph."""


class TooLarge(ValueError):
    """Exact conductance is limited to n <= 24 vertices."""


@dataclass(frozen=True)
class RegularGraph:
    """Undirected connected d-regular simple graph on vertices 0..n-1."""

    n: int
    d: int
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "edges",
                           tuple(tuple(sorted(map(int, e))) for e in self.edges))
        deg = np.zeros(self.n, dtype=int)
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise InvalidParameter(f"self-loop at vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise InvalidParameter(f"edge ({u}, {v}) out of range")
            if (u, v) in seen:
                raise InvalidParameter(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            deg[u] += 1
            deg[v] += 1
        if np.any(deg != self.d):
            raise InvalidParameter("graph is not d-regular")
        if len(self.edges) != self.n * self.d // 2:
            raise InvalidParameter("edge count must be n*d/2")
        if not _connected(self.n, self.edges):
            raise InvalidParameter("graph must be connected")

    def edge_array(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=np.int64)

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "RegularGraph":
        return cls(n=d["n"], d=d["d"], edges=tuple(map(tuple, d["edges"])))


def _connected(n: int, edges) -> bool:
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


def cycle(n: int) -> RegularGraph:
    if n < 3:
        raise InvalidParameter("cycle needs n >= 3")
    return RegularGraph(n, 2, tuple((i, (i + 1) % n) for i in range(n)))


def hypercube(dim: int) -> RegularGraph:
    if dim < 1:
        raise InvalidParameter("hypercube needs dim >= 1")
    n = 1 << dim
    edges = [(v, v ^ (1 << j)) for v in range(n) for j in range(dim) if v < v ^ (1 << j)]
    return RegularGraph(n, dim, tuple(edges))


def complete(n: int) -> RegularGraph:
    if n < 2:
        raise InvalidParameter("complete graph needs n >= 2")
    return RegularGraph(n, n - 1, tuple((u, v) for u in range(n) for v in range(u + 1, n)))


def random_regular(n: int, d: int, rng: np.random.Generator,
                   max_retries: int = 1000) -> RegularGraph:
    """Pairing-model sample of a random d-regular simple connected graph.

    Stubs are paired uniformly at random; the pairing is rejected until it is
    simple and connected.
    """
    if n * d % 2 != 0 or not (0 < d < n):
        raise InvalidParameter("need n*d even and 0 < d < n")
    stubs = np.repeat(np.arange(n), d)
    for _ in range(max_retries):
        perm = rng.permutation(stubs)
        u, v = perm[0::2], perm[1::2]
        if np.any(u == v):
            continue
        pairs = {(min(a, b), max(a, b)) for a, b in zip(u.tolist(), v.tolist())}
        if len(pairs) != len(u):
            continue
        if not _connected(n, pairs):
            continue
        return RegularGraph(n, d, tuple(sorted(pairs)))
    raise GenerationFailure(f"no simple connected pairing after {max_retries} retries")


def generate(kind: str, **params) -> RegularGraph:
    """Dispatch by kind: cycle(n), hypercube(dim), complete(n),
    random_regular(n, d, seed)."""
    if kind == "cycle":
        return cycle(params["n"])
    if kind == "hypercube":
        return hypercube(params["dim"])
    if kind == "complete":
        return complete(params["n"])
    if kind == "random_regular":
        rng = np.random.Generator(np.random.PCG64(params["seed"]))
        return random_regular(params["n"], params["d"], rng)
    raise InvalidParameter(f"unknown graph kind {kind!r}")


@dataclass(frozen=True)
class ConductanceResult:
    """Exact conductance with a minimizing vertex subset as witness."""

    phi: float
    witness_set: frozenset
    crossing_edges: int

    def validate(self, g: RegularGraph) -> None:
        if cut_ratio(g, self.witness_set) != self.phi:
            raise InvalidParameter("witness does not reproduce phi")


def cut_ratio(g: RegularGraph, subset) -> float:
    """|E(S, V-S)| / (|S| * d) for a vertex subset S."""
    s = frozenset(subset)
    if not (1 <= len(s) <= g.n):
        raise InvalidParameter("subset must be non-empty")
    crossing = sum(1 for u, v in g.edges if (u in s) != (v in s))
    return crossing / (len(s) * g.d)


def _popcount(a: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(a)
    c = np.zeros(a.shape, dtype=np.uint32)
    a = a.copy()
    while np.any(a):
        c += a & 1
        a >>= 1
    return c


def conductance_exact(g: RegularGraph) -> ConductanceResult:
    """Brute-force minimum of |E(S, V-S)| / (|S| d) over 1 <= |S| <= n/2."""
    if g.n > _MAX_EXACT_N:
        raise TooLarge(f"exact conductance limited to n <= {_MAX_EXACT_N}")
    masks = np.arange(1, 1 << g.n, dtype=np.uint32)
    sizes = _popcount(masks)
    crossing = np.zeros(masks.shape, dtype=np.uint32)
    for u, v in g.edges:
        crossing += ((masks >> np.uint32(u)) ^ (masks >> np.uint32(v))) & np.uint32(1)
    valid = (sizes >= 1) & (sizes <= g.n // 2)
    ratio = np.where(valid, crossing / (sizes * np.uint32(g.d)), np.inf)
    best = int(np.argmin(ratio))
    mask = int(masks[best])
    witness = frozenset(i for i in range(g.n) if mask >> i & 1)
    return ConductanceResult(phi=float(ratio[best]), witness_set=witness,
                             crossing_edges=int(crossing[best]))


def graphical_rank_counts(g: RegularGraph, y, rank_of_vertex: np.ndarray) -> np.ndarray:
    """Integer allocation counts per rank in halves of 1/|E|.

    Each edge contributes 2 to its strictly less loaded endpoint, or 1 to each
    endpoint on a tie; counts sum to 2|E| exactly.
    """
    yv = np.asarray(getattr(y, "y", y), dtype=np.float64)
    rank = np.asarray(rank_of_vertex, dtype=np.int64)
    if len(yv) != g.n or len(rank) != g.n:
        raise InvalidParameter("y and rank_of_vertex must have length n")
    e = g.edge_array()
    yu, yv_ = yv[rank[e[:, 0]]], yv[rank[e[:, 1]]]
    counts = np.zeros(g.n, dtype=np.int64)
    np.add.at(counts, e[:, 0], np.where(yu < yv_, 2, np.where(yu == yv_, 1, 0)))
    np.add.at(counts, e[:, 1], np.where(yv_ < yu, 2, np.where(yu == yv_, 1, 0)))
    order = np.empty(g.n, dtype=np.int64)
    order[rank] = np.arange(g.n)
    return counts[order]


def graphical_probability_vector(g: RegularGraph, y,
                                 rank_of_vertex: np.ndarray) -> ProbabilityVector:
    """Edge-sampling allocation probabilities by rank, with random ties.

    p_rank(i) sums, over the edges incident to bin i, 1/|E| when i is strictly
    less loaded than the other endpoint and 1/(2|E|) on a tie.
    """
    counts = graphical_rank_counts(g, y, rank_of_vertex)
    return ProbabilityVector(counts / (2 * len(g.edges)))


def verify_expansion_bounds(g: RegularGraph, y, rank_of_vertex: np.ndarray,
                            phi: float | None = None) -> ConditionReport:
    """Check the conductance-driven bounds on the graphical vector.

    Prefix sums up to n/2 stay below (1 - phi) k/n, suffix sums beyond n/2
    stay above (1 + phi)(n-k+1)/n, and no entry exceeds d/n.  The prefix
    bound is only guaranteed for strict load orderings; tied configurations
    can violate it (all-equal loads give prefix sums of exactly k/n).
    """
    if phi is None:
        phi = conductance_exact(g).phi
    p = graphical_probability_vector(g, y, rank_of_vertex)
    n = g.n
    tol = 1e-12 * n
    cap = g.d / n
    worst = int(np.argmax(p.p))
    if p.p[worst] > cap + tol:
        return ConditionReport(holds=False, delta=0.5, epsilon=phi, C=g.d,
                               witness_k=worst + 1, witness_value=float(p.p[worst]))
    half = n // 2
    prefix = np.cumsum(p.p)
    for k in range(1, half + 1):
        if prefix[k - 1] > (1.0 - phi) * k / n + tol:
            return ConditionReport(holds=False, delta=0.5, epsilon=phi, C=g.d,
                                   witness_k=k, witness_value=float(prefix[k - 1]))
    suffix = np.cumsum(p.p[::-1])[::-1]
    for k in range(half + 1, n + 1):
        if suffix[k - 1] < (1.0 + phi) * (n - k + 1) / n - tol:
            return ConditionReport(holds=False, delta=0.5, epsilon=phi, C=g.d,
                                   witness_k=k, witness_value=float(suffix[k - 1]))
    return ConditionReport(holds=True, delta=0.5, epsilon=phi, C=g.d)


def write_edge_list(g: RegularGraph, path) -> None:
    """Text exchange format: header "n d", then one "u v" pair per line."""
    with open(path, "w", newline="\n") as f:
        f.write(f"{g.n} {g.d}\n")
        for u, v in g.edges:
            f.write(f"{u} {v}\n")


def read_edge_list(path) -> RegularGraph:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise InvalidParameter("empty graph file")
    try:
        n, d = map(int, lines[0].split())
        edges = tuple(tuple(map(int, ln.split())) for ln in lines[1:])
    except ValueError as exc:
        raise InvalidParameter(f"malformed graph file: {exc}") from exc
    return RegularGraph(n=n, d=d, edges=edges)
