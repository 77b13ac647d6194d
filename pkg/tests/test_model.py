"""Domain types, link function and subgraph accounting."""

import math

import numpy as np
import pytest

from sparsecp import (
    Graph,
    Hyperparams,
    NodeParams,
    NodeParamArray,
    Partition,
    SubgraphCounts,
    connection_probability,
    partition_core_periphery,
    subgraph_counts,
)


def make_params(ws):
    """Node params realising explicit (w1, w2) weight vectors exactly."""
    w0 = np.empty(len(ws))
    beta = np.empty((len(ws), 2))
    for i, (w1, w2) in enumerate(ws):
        if w1 > 0:
            w0[i], beta[i] = w1, (1.0, w2 / w1)
        else:
            w0[i], beta[i] = w2, (0.0, 1.0)
    return NodeParamArray(w0, beta)


class TestConnectionProbability:
    def test_zero_weights(self):
        assert connection_probability((0, 0), (0, 0)) == 0.0
        assert connection_probability((0, 0), (0, 0), is_self=True) == 0.0

    def test_hand_values(self):
        # 1 - exp(-2 * 0.5 * 0.5) = 1 - e^-0.5
        got = connection_probability((0, 0.5), (0, 0.5))
        assert got == pytest.approx(-math.expm1(-0.5), abs=1e-12)
        # self loop with w = (1, 0): 1 - e^-1
        got = connection_probability((1, 0), (1, 0), is_self=True)
        assert got == pytest.approx(-math.expm1(-1.0), abs=1e-12)

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            connection_probability((1, 2), (1, 2, 3))

    def test_monotone_and_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            wi = rng.gamma(1.0, 0.5, size=3)
            wj = rng.gamma(1.0, 0.5, size=3)
            bigger = wi.copy()
            bigger[rng.integers(3)] *= 1.5
            if 2.0 * np.dot(bigger, wj) > 30.0:
                continue  # beyond float64 resolution of 1-exp(-x)
            p = connection_probability(wi, wj)
            assert 0.0 <= p < 1.0
            assert connection_probability(bigger, wj) > p


class TestPartition:
    def test_definition(self):
        g = Graph.from_edges(2, [(0, 1)])
        pa = make_params([(0.5, 0.2), (0.0, 0.3)])
        part = partition_core_periphery(pa, g)
        assert part.core == {0} and part.periphery == {1}

    def test_all_periphery(self):
        g = Graph.from_edges(2, [(0, 1)])
        pa = make_params([(0.0, 0.2), (0.0, 0.3)])
        part = partition_core_periphery(pa, g)
        assert part.core == frozenset()

    def test_isolated_excluded(self):
        g = Graph.from_edges(3, [(0, 1)])
        pa = make_params([(0.5, 0.2), (0.0, 0.3), (0.9, 0.4)])
        part = partition_core_periphery(pa, g)
        assert 2 not in part.core and 2 not in part.periphery

    def test_relabel_commutes(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(3, 12))
            pairs = rng.integers(0, n, size=(n, 2))
            g = Graph.from_edge_array(n, pairs)
            w0 = rng.gamma(1, 1, n) + 0.01
            beta = np.column_stack([rng.integers(0, 2, n).astype(float),
                                    rng.gamma(1, 1, n) + 0.01])
            pa = NodeParamArray(w0, beta)
            perm = rng.permutation(n)
            part = partition_core_periphery(pa, g)
            part2 = partition_core_periphery(pa.subset(np.argsort(perm)), g.relabel(perm))
            assert {perm[i] for i in part.core} == set(part2.core)
            assert {perm[i] for i in part.periphery} == set(part2.periphery)


class TestSubgraphCounts:
    def test_triangle(self):
        g = Graph.from_edges(3, [(0, 1), (0, 2), (1, 2)])
        part = Partition.from_sets({0, 1}, {2})
        c = subgraph_counts(g, part)
        assert (c.e_cc, c.e_cp, c.e_pp, c.e_total) == (1, 2, 0, 3)

    def test_empty(self):
        c = subgraph_counts(Graph(0, ()), Partition.from_sets(set(), set()))
        assert c.e_total == 0 and c.n_nodes == 0

    def test_self_loop_on_core(self):
        g = Graph.from_edges(1, [(0, 0)])
        part = Partition.from_sets({0}, set())
        c = subgraph_counts(g, part)
        assert c.e_cc == 1 and c.e_total == 1

    def test_additivity_property(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(1, 15))
            m = int(rng.integers(0, 25))
            pairs = rng.integers(0, n, size=(m, 2))
            g = Graph.from_edge_array(n, pairs) if m else Graph(n, ())
            touched = set(np.unique(g.edge_array)) if g.n_edges else set()
            coin = rng.random(n) < 0.5
            core = {i for i in touched if coin[i]}
            part = Partition.from_sets(core, touched - core)
            c = subgraph_counts(g, part)
            assert c.e_cc + c.e_pp + c.e_cp == c.e_total
            assert c.n_core + c.n_periph == c.n_nodes

    def test_out_of_range_partition(self):
        g = Graph.from_edges(2, [(0, 1)])
        with pytest.raises(ValueError):
            subgraph_counts(g, Partition.from_sets({0}, {5}))


class TestTypes:
    def test_graph_canonicalisation(self):
        g = Graph.from_edges(4, [(2, 1), (1, 2), (0, 0), (3, 1)])
        assert g.edges == ((0, 0), (1, 2), (1, 3))
        assert g.degrees.tolist() == [1, 2, 1, 1]

    def test_graph_rejects_bad_edge(self):
        with pytest.raises(ValueError):
            Graph.from_edges(2, [(0, 2)])

    def test_node_params_invariants(self):
        p = NodeParams(w0=2.0, beta=(1.0, 0.5))
        assert p.w == (2.0, 1.0)
        with pytest.raises(ValueError):
            NodeParams(w0=1.0, beta=(0.5, 0.5))
        with pytest.raises(ValueError):
            NodeParams(w0=1.0, beta=(1.0, -0.5))

    def test_hyperparams_regimes(self):
        Hyperparams(alpha=1, sigma=0.5, tau=0.0, a=(0.2,), b=(0.5,))
        Hyperparams(alpha=1, sigma=-2.0, tau=0.5, a=(0.2,), b=(0.5,))
        with pytest.raises(ValueError):
            Hyperparams(alpha=1, sigma=-0.5, tau=0.0, a=(0.2,), b=(0.5,))
        with pytest.raises(ValueError):
            Hyperparams(alpha=1, sigma=1.2, tau=1.0, a=(0.2,), b=(0.5,))
        with pytest.raises(ValueError):
            Hyperparams(alpha=0.0, sigma=0.5, tau=1.0, a=(0.2,), b=(0.5,))

    def test_subgraph_counts_validation(self):
        with pytest.raises(ValueError):
            SubgraphCounts(n_nodes=2, n_core=1, n_periph=1,
                           e_total=3, e_cc=1, e_pp=1, e_cp=0)
