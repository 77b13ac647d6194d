"""Latent count sampling against closed-form truncated-Poisson oracles."""

import math

import numpy as np
import pytest

from sparsecp import Graph, Hyperparams
from sparsecp.mcmc import (
    ChainState,
    LatentCounts,
    SamplerConfig,
    resample_latent_counts,
    sample_truncated_poisson,
)
from sparsecp.mcmc.latent import _draw_conditional, _ztp_totals


def ztp_mean(lam_total):
    return lam_total / -math.expm1(-lam_total)


class TestTruncatedPoisson:
    def test_zero_rate_coordinate_stays_zero(self):
        rng = np.random.default_rng(0)
        draws = np.array([sample_truncated_poisson((0.0, 2.0), rng) for _ in range(100_000)])
        assert (draws[:, 0] == 0).all()
        want = 2.0 / -math.expm1(-2.0)
        se = draws[:, 1].std(ddof=1) / math.sqrt(len(draws))
        assert abs(draws[:, 1].mean() - want) < 3 * se

    def test_total_mean(self):
        rng = np.random.default_rng(1)
        totals = _ztp_totals(np.full(100_000, 10.0), rng)
        want = ztp_mean(10.0)
        se = totals.std(ddof=1) / math.sqrt(totals.size)
        assert abs(totals.mean() - want) < 3 * se

    def test_total_always_positive(self):
        rng = np.random.default_rng(2)
        for lam in (1e-8, 0.3, 1.9, 2.0, 25.0):
            totals = _ztp_totals(np.full(2000, lam), rng)
            assert (totals >= 1).all()

    def test_small_rate_limit(self):
        rng = np.random.default_rng(3)
        totals = _ztp_totals(np.full(50_000, 1e-6), rng)
        assert (totals == 1).mean() > 0.999

    def test_all_zero_rates_invalid(self):
        with pytest.raises(ValueError):
            sample_truncated_poisson((0.0, 0.0), np.random.default_rng(0))

    def test_coordinate_means(self):
        # mean of coordinate k is lam_k / (1 - e^{-sum lam})
        rng = np.random.default_rng(4)
        rates = np.array([0.7, 1.8, 0.2])
        draws = np.array([sample_truncated_poisson(rates, rng) for _ in range(50_000)])
        want = rates / -math.expm1(-rates.sum())
        se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
        assert (np.abs(draws.mean(axis=0) - want) < 3 * se).all()


def _toy_state(rng, n=8, k=2, with_latent=True):
    pairs = [(i, j) for i in range(n) for j in range(i, n) if rng.random() < 0.45]
    if not pairs:
        pairs = [(0, 1)]
    graph = Graph.from_edges(n, pairs)
    w0 = rng.gamma(1.5, 1.0, n) + 0.05
    beta = np.column_stack([(rng.random(n) < 0.6).astype(float)]
                           + [rng.gamma(1.0, 1.0, n) + 0.05 for _ in range(k - 1)])
    hp = Hyperparams(alpha=20.0, sigma=0.2, tau=1.0,
                     a=(0.2,) * (k - 1), b=(0.5,) * (k - 1))
    state = ChainState(w0=w0, beta=beta, w_star=np.full(k, 0.1), hp=hp)
    if with_latent:
        cfg = SamplerConfig(n_iters=10, n_burnin=1, p_lat=0.0)
        state.latent = resample_latent_counts(graph, state, cfg, rng)
    return graph, state


class TestResampleLatent:
    def test_invariants(self):
        rng = np.random.default_rng(5)
        cfg = SamplerConfig(n_iters=10, n_burnin=1, p_lat=0.5)
        for _ in range(50):
            graph, state = _toy_state(rng)
            lat = resample_latent_counts(graph, state, cfg, rng)
            state.latent = lat
            assert (lat.counts.sum(axis=1) >= 1).all()
            core = state.beta[:, 0]
            both_core = core[lat.edges[:, 0]] * core[lat.edges[:, 1]]
            assert (lat.counts[both_core == 0, 0] == 0).all()
            loops = lat.edges[:, 0] == lat.edges[:, 1]
            assert (lat.counts[loops] % 2 == 0).all()

    def test_plain_gibbs_matches_direct_tpoisson(self):
        # p_lat = 0 must reduce to direct conditional draws: compare the
        # count distribution on one fixed edge via a two-sample KS test.
        rng = np.random.default_rng(6)
        graph = Graph.from_edges(2, [(0, 1)])
        w0 = np.array([1.2, 0.8])
        beta = np.array([[1.0, 0.7], [1.0, 1.1]])
        hp = Hyperparams(alpha=5.0, sigma=0.2, tau=1.0, a=(0.2,), b=(0.5,))
        state = ChainState(w0=w0, beta=beta, w_star=np.array([0.1, 0.1]), hp=hp)
        cfg = SamplerConfig(n_iters=10, n_burnin=1, p_lat=0.0)
        n_draw = 100_000
        gibbs = np.empty((n_draw, 2), dtype=np.int64)
        for r in range(n_draw):
            gibbs[r] = resample_latent_counts(graph, state, cfg, rng).counts[0]
        w = state.weights()
        rates = 2.0 * w[0] * w[1]
        direct = np.array([sample_truncated_poisson(rates, rng) for _ in range(n_draw)])
        from scipy.stats import ks_2samp
        for col in range(2):
            stat = ks_2samp(gibbs[:, col], direct[:, col])
            assert stat.pvalue > 1e-4

    def test_mixture_move_preserves_distribution(self):
        # Long alternation of the p_lat kernel starting from an exact draw
        # keeps the per-edge count distribution (detailed balance check).
        rng = np.random.default_rng(7)
        graph = Graph.from_edges(2, [(0, 1)])
        w0 = np.array([0.9, 1.1])
        beta = np.array([[1.0, 0.6], [1.0, 0.9]])
        hp = Hyperparams(alpha=5.0, sigma=0.2, tau=1.0, a=(0.2,), b=(0.5,))
        cfg = SamplerConfig(n_iters=10, n_burnin=1, p_lat=0.7)
        n_draw = 60_000
        chain_counts = np.empty((n_draw, 2), dtype=np.int64)
        state = ChainState(w0=w0, beta=beta, w_star=np.array([0.1, 0.1]), hp=hp)
        state.latent = resample_latent_counts(
            graph, state, SamplerConfig(n_iters=10, n_burnin=1, p_lat=0.0), rng)
        for r in range(n_draw):
            state.latent = resample_latent_counts(graph, state, cfg, rng)
            chain_counts[r] = state.latent.counts[0]
        w = state.weights()
        rates = 2.0 * w[0] * w[1]
        direct = np.array([sample_truncated_poisson(rates, rng) for _ in range(n_draw)])
        from scipy.stats import ks_2samp
        for col in range(2):
            stat = ks_2samp(chain_counts[:, col], direct[:, col])
            assert stat.pvalue > 1e-4

    def test_no_edges(self):
        rng = np.random.default_rng(8)
        hp = Hyperparams(alpha=5.0, sigma=0.2, tau=1.0, a=(0.2,), b=(0.5,))
        state = ChainState(w0=np.array([1.0]), beta=np.array([[1.0, 1.0]]),
                           w_star=np.array([0.1, 0.1]), hp=hp)
        graph = Graph(1, ())
        lat = resample_latent_counts(graph, state, SamplerConfig(), rng)
        assert lat.counts.shape == (0, 2)
        assert lat.row_sums().shape == (1, 2)

    def test_row_sums_symmetry(self):
        edges = np.array([[0, 1], [1, 1], [0, 2]])
        counts = np.array([[1, 2], [4, 2], [0, 3]])
        lat = LatentCounts(edges=edges, counts=counts, n_nodes=3)
        m = lat.row_sums()
        np.testing.assert_array_equal(m[0], [1, 5])
        np.testing.assert_array_equal(m[1], [5, 4])
        np.testing.assert_array_equal(m[2], [0, 3])

    def test_draw_conditional_positive_totals(self):
        rng = np.random.default_rng(9)
        rates = rng.gamma(0.5, 1.0, size=(5000, 3))
        rates[:, 0] *= rng.integers(0, 2, 5000)
        counts = _draw_conditional(rates, rng)
        assert (counts.sum(axis=1) >= 1).all()
        assert (counts[rates[:, 0] == 0, 0] == 0).all()
