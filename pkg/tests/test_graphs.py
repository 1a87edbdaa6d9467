import itertools
import math

import numpy as np
import pytest

from batchbins.core import InvalidParameter, RngSeedPlan
from batchbins.graphs import (
    GenerationFailure,
    RegularGraph,
    TooLarge,
    complete,
    conductance_exact,
    cut_ratio,
    cycle,
    generate,
    graphical_probability_vector,
    graphical_rank_counts,
    hypercube,
    random_regular,
    read_edge_list,
    verify_expansion_bounds,
    write_edge_list,
)


def conductance_by_subsets(g):
    """Independent oracle: plain itertools enumeration of all subsets."""
    best = math.inf
    for size in range(1, g.n // 2 + 1):
        for subset in itertools.combinations(range(g.n), size):
            best = min(best, cut_ratio(g, subset))
    return best


class TestGenerators:
    def test_cycle(self):
        g = cycle(6)
        assert (g.n, g.d, len(g.edges)) == (6, 2, 6)

    def test_hypercube(self):
        g = hypercube(3)
        assert (g.n, g.d, len(g.edges)) == (8, 3, 12)

    def test_complete(self):
        g = complete(4)
        assert (g.n, g.d, len(g.edges)) == (4, 3, 6)

    def test_random_regular(self):
        g = random_regular(12, 3, RngSeedPlan(1).generator())
        deg = np.zeros(12, dtype=int)
        for u, v in g.edges:
            deg[u] += 1
            deg[v] += 1
        assert np.all(deg == 3)

    def test_parameter_validation(self):
        with pytest.raises(InvalidParameter):
            cycle(2)
        with pytest.raises(InvalidParameter):
            random_regular(5, 3, RngSeedPlan(1).generator())  # nd odd
        with pytest.raises(InvalidParameter):
            random_regular(4, 4, RngSeedPlan(1).generator())  # d >= n

    def test_generation_failure(self):
        with pytest.raises(GenerationFailure):
            random_regular(12, 3, RngSeedPlan(1).generator(), max_retries=0)

    def test_generate_dispatch(self):
        assert generate("cycle", n=5).n == 5
        assert generate("hypercube", dim=2).n == 4
        assert generate("complete", n=3).d == 2
        assert generate("random_regular", n=8, d=3, seed=7).d == 3
        with pytest.raises(InvalidParameter):
            generate("torus", n=4)

    def test_invalid_graphs_rejected(self):
        with pytest.raises(InvalidParameter):
            RegularGraph(n=3, d=2, edges=((0, 0), (1, 2), (0, 1)))  # self-loop
        with pytest.raises(InvalidParameter):
            RegularGraph(n=4, d=2, edges=((0, 1), (1, 0), (2, 3), (3, 2)))  # dup
        with pytest.raises(InvalidParameter):
            # two disjoint edges: 1-regular but disconnected
            RegularGraph(n=4, d=1, edges=((0, 1), (2, 3)))


class TestConductance:
    @pytest.mark.parametrize("g,phi", [(cycle(6), 1 / 3), (complete(4), 2 / 3),
                                       (hypercube(3), 1 / 3)],
                             ids=["cycle6", "K4", "Q3"])
    def test_golden_values(self, g, phi):
        result = conductance_exact(g)
        assert result.phi == phi
        result.validate(g)
        assert conductance_by_subsets(g) == result.phi

    def test_cycle6_witness_is_arc(self):
        result = conductance_exact(cycle(6))
        assert len(result.witness_set) == 3
        assert result.crossing_edges == 2

    def test_random_regular_matches_oracle(self):
        g = random_regular(10, 3, RngSeedPlan(3).generator())
        assert conductance_exact(g).phi == conductance_by_subsets(g)

    def test_too_large(self):
        with pytest.raises(TooLarge):
            conductance_exact(cycle(25))


def strict_ordering(n, rng):
    """A random strict load ordering: distinct y values plus the inverse
    rank permutation assigning them to vertices."""
    y = np.sort(rng.normal(0, 1, n))[::-1]
    y -= y.mean()
    perm = rng.permutation(n)  # rank_of_vertex
    return y, perm


class TestGraphicalVector:
    def test_all_equal_uniform(self):
        g = cycle(4)
        p = graphical_probability_vector(g, np.zeros(4), np.arange(4))
        assert p.p.tolist() == [0.25] * 4

    def test_complete3_distinct(self):
        g = complete(3)
        # loads (2, 1, 0) on vertices 0,1,2: rank_of_vertex = identity.
        y = np.array([1.0, 0.0, -1.0])
        p = graphical_probability_vector(g, y, np.arange(3))
        assert p.p.tolist() == pytest.approx([0.0, 1 / 3, 2 / 3], abs=1e-15)

    def test_cycle4_alternating(self):
        g = cycle(4)
        # loads (1, 0, 1, 0): vertices 0,2 are ranks 1,2; vertices 1,3 ranks 3,4.
        y = np.array([0.5, 0.5, -0.5, -0.5])
        rank_of_vertex = np.array([0, 2, 1, 3])
        p = graphical_probability_vector(g, y, rank_of_vertex)
        assert p.p.tolist() == [0.0, 0.0, 0.5, 0.5]

    def test_counts_sum_exactly(self):
        rng = RngSeedPlan(4).generator()
        for g in (cycle(8), hypercube(3), complete(8)):
            for _ in range(50):
                y, perm = strict_ordering(g.n, rng)
                counts = graphical_rank_counts(g, y, perm)
                assert counts.sum() == 2 * len(g.edges)

    def test_max_entry_cap(self):
        rng = RngSeedPlan(5).generator()
        for g in (cycle(8), hypercube(3), complete(8),
                  random_regular(12, 3, RngSeedPlan(6).generator())):
            for _ in range(200):
                y, perm = strict_ordering(g.n, rng)
                p = graphical_probability_vector(g, y, perm)
                assert p.p.max() <= g.d / g.n + 1e-12


class TestExpansionBounds:
    @pytest.mark.parametrize("g", [cycle(8), hypercube(3), complete(8)],
                             ids=["cycle8", "Q3", "K8"])
    def test_strict_orderings_hold(self, g):
        phi = conductance_exact(g).phi
        rng = RngSeedPlan(7).generator()
        for _ in range(1000):
            y, perm = strict_ordering(g.n, rng)
            assert verify_expansion_bounds(g, y, perm, phi=phi).holds

    def test_complete4_exhaustive_orderings(self):
        g = complete(4)
        phi = conductance_exact(g).phi
        y = np.array([1.5, 0.5, -0.5, -1.5])
        for perm in itertools.permutations(range(4)):
            assert verify_expansion_bounds(g, y, np.array(perm), phi=phi).holds

    def test_tied_configuration_violates_prefix(self):
        # With all loads equal the prefix sums equal k/n, which exceeds
        # (1 - phi) k/n whenever phi > 0; tied cases are logged, not asserted.
        g = cycle(6)
        report = verify_expansion_bounds(g, np.zeros(6), np.arange(6))
        assert not report.holds
        assert report.witness_k == 1


class TestEdgeListFormat:
    def test_round_trip(self, tmp_path):
        g = random_regular(12, 3, RngSeedPlan(8).generator())
        path = tmp_path / "graph.txt"
        write_edge_list(g, path)
        g2 = read_edge_list(path)
        assert g2 == g
        first = path.read_text().splitlines()[0]
        assert first == "12 3"

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("4 x\n0 1\n")
        with pytest.raises(InvalidParameter):
            read_edge_list(path)
