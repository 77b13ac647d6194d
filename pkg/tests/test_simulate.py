"""Forward simulation against quadrature and closed-form oracles."""

import math

import numpy as np
import pytest
from scipy import special

from sparsecp import (
    Graph,
    HolmeConfig,
    Hyperparams,
    NodeParamArray,
    default_truncation,
    parameter_sweep,
    sample_ggp_weights,
    sample_graph,
    sample_holme_graph,
    sample_scores,
)
from sparsecp.quadrature import levy_integral


HP = Hyperparams(alpha=100.0, sigma=0.5, tau=1.0, a=(0.2,), b=(0.5,))


def truncated_mean(hp, eps):
    return hp.alpha * levy_integral(lambda w: w, hp.sigma, hp.tau, lo=eps) \
        / special.gamma(1.0 - hp.sigma)


def truncated_var(hp, eps):
    return hp.alpha * levy_integral(lambda w: w * w, hp.sigma, hp.tau, lo=eps) \
        / special.gamma(1.0 - hp.sigma)


class TestGgpWeights:
    def test_mean_total_mass_matches_first_moment(self):
        # Untruncated first moment is alpha * tau^(sigma-1) = 100; the jump
        # sum plus the remainder estimate recovers it over replicates.
        eps = 1e-3
        rng = np.random.default_rng(42)
        n_rep = 10_000
        totals = np.empty(n_rep)
        for r in range(n_rep):
            draw = sample_ggp_weights(HP, eps, rng)
            totals[r] = draw.w0s.sum()
        want_trunc = truncated_mean(HP, eps)
        se = math.sqrt(truncated_var(HP, eps) / n_rep)
        assert abs(totals.mean() - want_trunc) < 3 * se
        full = totals.mean() + draw.remainder_mass_estimate
        assert abs(full - HP.alpha * HP.tau ** (HP.sigma - 1.0)) < 3 * se + 1e-2

    def test_jump_count_finite_activity(self):
        hp = Hyperparams(alpha=50.0, sigma=-1.0, tau=1.0, a=(0.2,), b=(0.5,))
        eps = 0.01
        rng = np.random.default_rng(1)
        n_rep = 2000
        counts = np.array([sample_ggp_weights(hp, eps, rng).w0s.size for _ in range(n_rep)])
        want = hp.alpha * levy_integral(lambda w: np.ones_like(w), hp.sigma, hp.tau, lo=eps) \
            / special.gamma(1.0 - hp.sigma)
        se = math.sqrt(want / n_rep)
        assert abs(counts.mean() - want) < 3 * se

    def test_large_eps_empty(self):
        rng = np.random.default_rng(5)
        draw = sample_ggp_weights(HP, 60.0, rng)
        assert draw.w0s.size == 0

    def test_all_jumps_above_eps(self):
        rng = np.random.default_rng(9)
        draw = sample_ggp_weights(HP, 0.01, rng)
        assert (draw.w0s > 0.01).all()

    def test_determinism(self):
        d1 = sample_ggp_weights(HP, 1e-3, np.random.default_rng(7))
        d2 = sample_ggp_weights(HP, 1e-3, np.random.default_rng(7))
        np.testing.assert_array_equal(d1.w0s, d2.w0s)

    def test_eps_validation(self):
        with pytest.raises(ValueError):
            sample_ggp_weights(HP, 0.0, np.random.default_rng(0))

    def test_default_truncation_rule(self):
        eps = default_truncation(HP)
        lost = levy_integral(lambda w: w, HP.sigma, HP.tau, lo=0.0, hi=eps) \
            / special.gamma(1.0 - HP.sigma)
        assert lost < 1e-4 * HP.tau ** (HP.sigma - 1.0)

    def test_truncation_consistency_downstream_edges(self):
        # Shrinking eps tenfold leaves the mean edge count unchanged at MC
        # precision.
        hp = Hyperparams(alpha=30.0, sigma=0.5, tau=1.0, a=(0.2,), b=(0.5,))
        means = []
        ses = []
        for eps in (1e-3, 1e-4):
            rng = np.random.default_rng(123)
            edges = []
            for _ in range(150):
                w0 = sample_ggp_weights(hp, eps, rng).w0s
                params = sample_scores(w0, hp, rng)
                graph, _ = sample_graph(params, rng)
                edges.append(graph.n_edges)
            edges = np.asarray(edges, dtype=float)
            means.append(edges.mean())
            ses.append(edges.std(ddof=1) / math.sqrt(len(edges)))
        assert abs(means[0] - means[1]) < 3 * math.hypot(*ses)


class TestScores:
    def test_gamma_mean(self):
        rng = np.random.default_rng(0)
        w0 = np.full(100_000, 1.0)
        pa = sample_scores(w0, HP, rng)
        b2 = pa.beta[:, 1]
        se = b2.std(ddof=1) / math.sqrt(b2.size)
        assert abs(b2.mean() - 0.2 / 0.5) < 3 * se

    def test_bernoulli_at_log2(self):
        rng = np.random.default_rng(1)
        w0 = np.full(100_000, math.log(2.0))
        pa = sample_scores(w0, HP, rng)
        freq = pa.beta[:, 0].mean()
        se = math.sqrt(0.25 / w0.size)
        assert abs(freq - 0.5) < 3 * se

    def test_small_w0_periphery(self):
        rng = np.random.default_rng(2)
        pa = sample_scores(np.full(50_000, 1e-9), HP, rng)
        assert pa.beta[:, 0].sum() == 0

    def test_score_independence_at_fixed_w0(self):
        rng = np.random.default_rng(3)
        pa = sample_scores(np.full(100_000, 1.0), HP, rng)
        r = np.corrcoef(pa.beta[:, 0], pa.beta[:, 1])[0, 1]
        assert abs(r) < 3.0 / math.sqrt(len(pa))

    def test_derived_weights(self):
        rng = np.random.default_rng(4)
        pa = sample_scores(np.array([0.3, 2.0]), HP, rng)
        np.testing.assert_allclose(pa.w, pa.beta * pa.w0[:, None])


class TestSampleGraph:
    def test_zero_weights_empty_graph(self):
        pa = NodeParamArray(np.zeros(3), np.tile([0.0, 1.0], (3, 1)))
        graph, kept = sample_graph(pa, np.random.default_rng(0))
        assert graph.n_nodes == 0 and kept.size == 0

    def test_strong_pair_connects(self):
        beta = np.array([[0.0, 1.0], [0.0, 1.0]])
        pa = NodeParamArray(np.array([10.0, 10.0]), beta)
        hits = 0
        rng = np.random.default_rng(1)
        for _ in range(200):
            graph, kept = sample_graph(pa, rng)
            hits += any(i != j for i, j in graph.edges)
        assert hits == 200  # 1 - e^-200 indistinguishable from 1

    def test_poisson_matches_pairwise(self):
        # Both samplers realise the same pair-connection law.
        w0 = np.array([0.9, 0.5, 1.4, 0.2])
        beta = np.array([[1.0, 0.4], [0.0, 1.1], [1.0, 0.9], [0.0, 2.0]])
        pa = NodeParamArray(w0, beta)
        n = len(pa)
        n_rep = 20_000
        freqs = {}
        for method, seed in (("poisson", 10), ("pairwise", 11)):
            rng = np.random.default_rng(seed)
            count = np.zeros((n, n))
            for _ in range(n_rep):
                graph, kept = sample_graph(pa, rng, method=method)
                for i, j in graph.edges:
                    count[kept[i], kept[j]] += 1
            freqs[method] = count / n_rep
        w = pa.w
        rate = 2.0 * (w @ w.T)
        np.fill_diagonal(rate, 0.5 * np.diag(rate))
        want = -np.expm1(-rate)
        for method in freqs:
            iu, ju = np.triu_indices(n)
            p = want[iu, ju]
            se = np.sqrt(p * (1 - p) / n_rep)
            assert (np.abs(freqs[method][iu, ju] - p) < 4 * se + 1e-12).all()

    def test_kept_indices_alignment(self):
        rng = np.random.default_rng(17)
        w0 = rng.gamma(1, 1, 30) + 0.05
        beta = np.column_stack([(rng.random(30) < 0.3).astype(float),
                                rng.gamma(0.5, 2.0, 30) + 0.01])
        pa = NodeParamArray(w0, beta)
        graph, kept = sample_graph(pa, rng)
        assert graph.n_nodes == kept.size
        assert (graph.degrees >= 1).all()


class TestHolme:
    def test_kappa_zero_half_core(self):
        cfg = HolmeConfig(n_nodes=4000, kappa=0.0, m_min=5.0, seed=3)
        _, core = sample_holme_graph(cfg)
        se = math.sqrt(0.25 / cfg.n_nodes)
        assert abs(core.mean() - 0.5) < 4 * se

    def test_heaviside_limit(self):
        cfg = HolmeConfig(n_nodes=500, kappa=1e6, m_min=4.5, seed=4)
        rng = np.random.default_rng(cfg.seed)
        from sparsecp.simulate import _sample_powerlaw_degrees
        m = _sample_powerlaw_degrees(cfg.n_nodes, cfg.powerlaw_exponent, rng)
        _, core = sample_holme_graph(cfg)
        # Regenerating degrees with the same seed reproduces m exactly.
        assert (core == (m > cfg.m_min)).mean() > 0.999

    def test_simple_and_degree_capped(self):
        for seed in range(5):
            cfg = HolmeConfig(n_nodes=300, kappa=1.0, m_min=4.0, seed=seed)
            rng = np.random.default_rng(cfg.seed)
            from sparsecp.simulate import _sample_powerlaw_degrees
            m = _sample_powerlaw_degrees(cfg.n_nodes, cfg.powerlaw_exponent, rng)
            graph, _ = sample_holme_graph(cfg)
            assert len(set(graph.edges)) == graph.n_edges
            assert all(i != j for i, j in graph.edges)
            assert (graph.degrees <= m).all()

    def test_mean_core_fraction_matches_logistic(self):
        # Realised core fraction vs the expected fraction (1/N) sum q_i,
        # both averaged over replicates of the same config.
        n_rep = 100
        fracs = np.empty(n_rep)
        qbars = np.empty(n_rep)
        master = np.random.SeedSequence(99).spawn(n_rep)
        from sparsecp.simulate import _sample_powerlaw_degrees
        for r in range(n_rep):
            seed = int(np.random.default_rng(master[r]).integers(2**31))
            cfg = HolmeConfig(n_nodes=800, kappa=1.0, m_min=2.0, seed=seed)
            rng = np.random.default_rng(cfg.seed)
            m = _sample_powerlaw_degrees(cfg.n_nodes, cfg.powerlaw_exponent, rng)
            qbars[r] = special.expit(2.0 * cfg.kappa * (m - cfg.m_min)).mean()
            _, core = sample_holme_graph(cfg)
            fracs[r] = core.mean()
        se = math.hypot(fracs.std(ddof=1), qbars.std(ddof=1)) / math.sqrt(n_rep)
        assert abs(fracs.mean() - qbars.mean()) < 3 * se + 1e-3

    def test_determinism(self):
        cfg = HolmeConfig(n_nodes=200, kappa=2.0, m_min=3.0, seed=8)
        g1, c1 = sample_holme_graph(cfg)
        g2, c2 = sample_holme_graph(cfg)
        assert g1.edges == g2.edges
        np.testing.assert_array_equal(c1, c2)


class TestParameterSweep:
    def test_shapes_and_determinism(self):
        grid = [Hyperparams(alpha=a, sigma=0.2, tau=1.0, a=(0.2,), b=(0.5,))
                for a in (10.0, 20.0, 30.0)]
        t1 = parameter_sweep(grid, replicates=20, seed=5)
        t2 = parameter_sweep(grid, replicates=20, seed=5)
        assert len(t1) == 60
        assert t1.equals(t2)
        assert (t1.e_cc + t1.e_pp + t1.e_cp == t1.e_total).all()

    def test_singleton(self):
        grid = [Hyperparams(alpha=10.0, sigma=0.2, tau=1.0, a=(0.2,), b=(0.5,))]
        t = parameter_sweep(grid, replicates=1, seed=0)
        assert len(t) == 1

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            parameter_sweep([], replicates=1, seed=0)
