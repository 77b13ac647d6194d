"""Latent edge-count augmentation.

Every edge (i,j) carries a K-vector of latent counts distributed, given the
weights, as independent Poissons with rates 2*w_ik*w_jk conditioned on a
positive total; self-loops carry twice a draw at rates w_ik^2.  Zero-rate
coordinates are identically zero, so a core count can only be positive when
both endpoints carry the core flag.

The conditional draw is exact.  To help the binary core flags mix, a chosen
set of edges can instead be proposed from a mixture that zeroes the core
coordinate with probability p_lat, accepted with the standard MH ratio
against the exact conditional; detailed balance is preserved because the
proposal set depends only on the (fixed) flags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = ["LatentCounts", "sample_truncated_poisson", "resample_latent_counts"]


@dataclass
class LatentCounts:
    """Per-edge latent count vectors, stored once per unordered pair.

    ``edges`` is the (E, 2) array of canonical pairs (i <= j) and ``counts``
    the matching (E, K) nonnegative integers; symmetry is implicit.
    """

    edges: np.ndarray
    counts: np.ndarray
    n_nodes: int

    def row_sums(self) -> np.ndarray:
        """m[i, k] = sum_j counts on edges incident to i (self-loops once)."""
        k = self.counts.shape[1]
        m = np.zeros((self.n_nodes, k))
        if self.edges.size:
            off = self.edges[:, 0] != self.edges[:, 1]
            for col in range(k):
                m[:, col] = np.bincount(self.edges[:, 0], weights=self.counts[:, col],
                                        minlength=self.n_nodes)
                m[:, col] += np.bincount(self.edges[off, 1],
                                         weights=self.counts[off, col],
                                         minlength=self.n_nodes)
        return m

    def copy(self) -> "LatentCounts":
        return LatentCounts(self.edges, self.counts.copy(), self.n_nodes)


def _ztp_totals(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised zero-truncated Poisson totals, exact for any rate > 0."""
    lam = np.asarray(lam, dtype=float)
    if (lam <= 0).any():
        raise ValueError("zero-truncated Poisson needs a positive total rate")
    out = np.zeros(lam.shape, dtype=np.int64)
    small = lam < 2.0
    # Inversion by summation: P(T=1) = lam/expm1(lam), then ratios lam/t.
    if small.any():
        ls = lam[small]
        u = rng.random(ls.shape)
        pmf = ls / np.expm1(ls)
        t_val = np.ones(ls.shape, dtype=np.int64)
        idx = np.flatnonzero(u > pmf)
        u_r = u[idx] - pmf[idx]
        pmf_r = pmf[idx]
        lam_r = ls[idx]
        t = 1
        while idx.size:
            t += 1
            pmf_r = pmf_r * lam_r / t
            u_r = u_r - pmf_r
            done = u_r <= 0
            t_val[idx[done]] = t
            keep = ~done
            idx, u_r, pmf_r, lam_r = idx[keep], u_r[keep], pmf_r[keep], lam_r[keep]
            if t > 400:  # unreachable for lam < 2; guards fp stalls
                t_val[idx] = t
                break
        out[small] = t_val
    big = ~small
    if big.any():
        lb = lam[big]
        x = rng.poisson(lb)
        idx = np.flatnonzero(x == 0)
        while idx.size:
            x[idx] = rng.poisson(lb[idx])
            idx = idx[x[idx] == 0]
        out[big] = x
    return out


def _split_multinomial(totals: np.ndarray, rates: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    """Split totals across coordinates proportional to rates (rowwise)."""
    n, k = rates.shape
    counts = np.zeros((n, k), dtype=np.int64)
    ones = totals == 1
    if ones.any():
        # Single count: one categorical draw per row.
        cdf = np.cumsum(rates[ones], axis=1)
        u = rng.random(int(ones.sum())) * cdf[:, -1]
        col = (u[:, None] >= cdf).sum(axis=1)
        counts[np.flatnonzero(ones), col] = 1
    many = ~ones
    if many.any():
        idx = np.flatnonzero(many)
        remaining = totals[idx].astype(np.int64).copy()
        sub = rates[idx]
        rest = sub.sum(axis=1)
        for col in range(k - 1):
            with np.errstate(divide="ignore", invalid="ignore"):
                p = np.where(rest > 0, sub[:, col] / rest, 0.0)
            p = np.clip(p, 0.0, 1.0)
            draw = rng.binomial(remaining, p)
            counts[idx, col] = draw
            remaining -= draw
            rest = rest - sub[:, col]
        counts[idx, k - 1] = remaining
    return counts


def sample_truncated_poisson(rates, rng) -> np.ndarray:
    """One draw of independent Poissons conditioned on a positive total.

    Coordinates with zero rate are exactly zero.  All-zero rate vectors are
    rejected: the conditional law does not exist.
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if (rates < 0).any():
        raise ValueError("rates must be nonnegative")
    total_rate = rates.sum()
    if total_rate <= 0:
        raise ValueError("at least one rate must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    total = _ztp_totals(np.array([total_rate]), rng)
    return _split_multinomial(total, rates[None, :], rng)[0]


def _draw_conditional(rates: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact per-edge truncated-Poisson count vectors (rowwise)."""
    totals = _ztp_totals(rates.sum(axis=1), rng)
    return _split_multinomial(totals, rates, rng)


def _log_tpoisson(counts: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Rowwise log pmf of the truncated multivariate Poisson."""
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(counts > 0, counts * np.log(rates), 0.0)
    term = term - rates - special.gammaln(counts + 1.0)
    lam_tot = rates.sum(axis=1)
    return term.sum(axis=1) - np.log(-np.expm1(-lam_tot))


def edge_rates(edges: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Latent Poisson rates per canonical edge: 2 w_i w_j, or w_i^2 on loops."""
    i, j = edges[:, 0], edges[:, 1]
    rates = 2.0 * w[i] * w[j]
    loops = i == j
    rates[loops] = w[i[loops]] ** 2
    return rates


def resample_latent_counts(graph, state, cfg, rng) -> LatentCounts:
    """Refresh all latent counts given weights; mixture-MH on a core subset.

    Edges incident to a random tenth of the core-flagged nodes are proposed
    from the p_lat mixture that zeroes the core coordinate, and accepted or
    rejected as one block; every other edge gets an exact conditional draw.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    edges = graph.edge_array
    n = graph.n_nodes
    k = state.beta.shape[1]
    if edges.size == 0:
        return LatentCounts(edges=edges, counts=np.zeros((0, k), dtype=np.int64), n_nodes=n)
    w = state.beta * state.w0[:, None]
    rates = edge_rates(edges, w)
    loops = edges[:, 0] == edges[:, 1]

    p_lat = cfg.p_lat
    core_nodes = np.flatnonzero(state.beta[:, 0] > 0)
    a_mask = None
    if p_lat > 0.0 and core_nodes.size and state.latent is not None:
        n_pick = max(1, core_nodes.size // 10)
        picked = rng.choice(core_nodes, size=n_pick, replace=False)
        in_set = np.zeros(n, dtype=bool)
        in_set[picked] = True
        a_mask = in_set[edges[:, 0]] | in_set[edges[:, 1]]
        if not a_mask.any():
            a_mask = None

    new_counts = np.zeros_like(rates, dtype=np.int64)
    plain = slice(None) if a_mask is None else ~a_mask
    new_counts[plain] = _draw_conditional(rates[plain], rng)
    new_counts[plain & loops if a_mask is not None else loops] *= 2

    if a_mask is not None:
        a_rates = rates[a_mask]
        a_loops = loops[a_mask]
        old = state.latent.counts[a_mask]
        n_a = a_rates.shape[0]
        branch = rng.random(n_a) < p_lat
        prop = np.empty_like(old)
        if branch.any():
            zero_first = a_rates[branch].copy()
            zero_first[:, 0] = 0.0
            prop[branch] = _draw_conditional(zero_first, rng)
        if (~branch).any():
            prop[~branch] = _draw_conditional(a_rates[~branch], rng)
        prop[a_loops] *= 2

        def halved(x):
            y = x.copy()
            y[a_loops] //= 2
            return y

        def log_terms(xh):
            full = _log_tpoisson(xh, a_rates)
            zero_ok = xh[:, 0] == 0
            with np.errstate(divide="ignore"):
                zeroed = np.where(zero_ok, _log_tpoisson(xh[:, 1:], a_rates[:, 1:]),
                                  -np.inf)
            log_q = np.logaddexp(np.log1p(-p_lat) + full, np.log(p_lat) + zeroed)
            return full, log_q

        full_prop, q_prop = log_terms(halved(prop))
        full_old, q_old = log_terms(halved(old))
        log_ratio = (full_prop - full_old + q_old - q_prop).sum()
        if np.log(rng.random()) < log_ratio:
            new_counts[a_mask] = prop
        else:
            new_counts[a_mask] = old
    return LatentCounts(edges=edges, counts=new_counts, n_nodes=n)
