"""Forward simulation: GGP weights, scores, graphs, and the Holme generator.

The base weights are the jumps of a generalized gamma process with intensity
alpha * w^(-1-sigma) exp(-tau w) / Gamma(1-sigma).  Jumps above a truncation
eps are drawn exactly by thinning: successive intervals [lo, 10*lo) use the
dominating intensity with the exponential factor frozen at exp(-tau*lo),
whose inverse power-law CDF is available in closed form; candidates are then
accepted with probability exp(-tau*(w-lo)).

Graphs are realised exactly through the latent-count representation of the
link function: each slot k contributes a Poisson(S_k^2) batch of directed
hits with endpoints drawn proportional to the slot weights, so an unordered
pair {i,j} is hit with probability 1 - exp(-2 sum_k w_ik w_jk) and a node
self-loops with probability 1 - exp(-sum_k w_ik^2).  This costs
O(atoms + edges) instead of O(atoms^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import special

from .model import Graph, Hyperparams, NodeParamArray, partition_core_periphery, subgraph_counts
from .quadrature import levy_integral

__all__ = [
    "GenerationFailure",
    "GgpDraw",
    "HolmeConfig",
    "default_truncation",
    "sample_ggp_weights",
    "sample_scores",
    "sample_graph",
    "sample_holme_graph",
    "parameter_sweep",
]


class GenerationFailure(RuntimeError):
    """Stub wiring failed to complete within the retry budget."""

    def __init__(self, message: str, retries: int):
        super().__init__(f"{message} after {retries} retries")
        self.retries = retries


class SimulationBudgetError(RuntimeError):
    """The requested point process implies an unrepresentable atom count."""


@dataclass(frozen=True)
class GgpDraw:
    """Jumps of a truncated GGP plus an estimate of the discarded mass."""

    w0s: np.ndarray
    truncation_eps: float
    remainder_mass_estimate: float

    def __post_init__(self):
        if self.truncation_eps <= 0:
            raise ValueError("truncation_eps must be positive")
        if self.remainder_mass_estimate < 0:
            raise ValueError("remainder mass must be nonnegative")


@dataclass(frozen=True)
class HolmeConfig:
    """Out-of-model core-periphery generator settings.

    Node i joins the core with probability 1/(1+exp(-2*kappa*(m_i-m_min)))
    where m_i is its target degree; kappa -> inf recovers a hard degree
    threshold at m_min.
    """

    n_nodes: int
    kappa: float
    m_min: float
    powerlaw_exponent: float = 2.5
    seed: int = 0
    max_retries: int = 10

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("need at least 2 nodes")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.m_min < 1:
            raise ValueError("m_min must be >= 1")
        if self.powerlaw_exponent <= 1:
            raise ValueError("powerlaw exponent must exceed 1")


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _powerlaw_mass(lo: float, hi: float, sigma: float) -> float:
    """integral of w^(-1-sigma) over [lo, hi]; inf when it overflows."""
    if sigma == 0.0:
        return math.log(hi / lo)
    try:
        return (lo**-sigma - hi**-sigma) / sigma
    except OverflowError:
        return math.inf


def _powerlaw_invcdf(u: np.ndarray, lo: float, hi: float, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return lo * (hi / lo) ** u
    return (lo**-sigma - u * (lo**-sigma - hi**-sigma)) ** (-1.0 / sigma)


def _tail_mass_bound(sigma: float, tau: float, lo: float) -> float:
    """Upper bound on integral of w^(-1-sigma) e^(-tau w) over (lo, inf)."""
    if sigma > 0:
        return math.exp(-tau * lo) * lo**-sigma / sigma
    if sigma == 0:
        return float(special.exp1(tau * lo)) if tau * lo > 0 else math.inf
    return float(tau**sigma * special.gamma(-sigma) * special.gammaincc(-sigma, tau * lo))


def thinned_ggp_points(alpha: float, sigma: float, tau: float, eps: float,
                       rng: np.random.Generator,
                       extra_accept: Callable[[np.ndarray], np.ndarray] | None = None,
                       tail_tol: float = 1e-12,
                       max_points: float = 2e8) -> np.ndarray:
    """Points of a Poisson process with intensity alpha*rho0(w)*g(w) on (eps, inf).

    rho0 is the GGP intensity and g = extra_accept is an optional thinning
    factor with values in [0, 1].  Exact above the truncation: the interval
    loop stops only once the dominating mass of the remaining tail is below
    tail_tol in expectation.  Raises :class:`SimulationBudgetError` when a
    single interval would dominate more than max_points candidates (extreme
    parameter proposals).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    norm = special.gamma(1.0 - sigma)
    if not math.isfinite(norm) or norm <= 0.0:
        raise SimulationBudgetError(f"Gamma(1-sigma) overflows for sigma={sigma:.3g}")
    c = alpha / norm
    out = []
    lo = eps
    while True:
        hi = lo * 10.0
        mean_dom = c * math.exp(-tau * lo) * _powerlaw_mass(lo, hi, sigma)
        if not math.isfinite(mean_dom) or mean_dom > max_points:
            raise SimulationBudgetError(
                f"dominating mass {mean_dom:.3e} on [{lo:.3e}, {hi:.3e}) "
                f"for sigma={sigma:.3g}, tau={tau:.3g}")
        n = rng.poisson(mean_dom) if mean_dom > 0 else 0
        if n:
            w = _powerlaw_invcdf(rng.random(n), lo, hi, sigma)
            acc = np.exp(-tau * (w - lo))
            if extra_accept is not None:
                acc = acc * extra_accept(w)
            w = w[rng.random(n) < acc]
            if w.size:
                out.append(w)
        lo = hi
        if c * _tail_mass_bound(sigma, tau, lo) < tail_tol:
            break
    if not out:
        return np.empty(0)
    return np.concatenate(out)


def default_truncation(hp: Hyperparams, rel_mass: float = 1e-4) -> float:
    """Truncation level whose discarded mass is below rel_mass * tau^(sigma-1).

    Uses the small-eps expansion of the sub-eps first moment; requires
    tau > 0 (the untruncated first moment tau^(sigma-1) must be finite).
    """
    if hp.tau <= 0:
        raise ValueError("default truncation needs tau > 0; pass eps explicitly")
    g1 = special.gamma(1.0 - hp.sigma)
    target = rel_mass * hp.tau ** (hp.sigma - 1.0)
    return float((0.9 * target * (1.0 - hp.sigma) * g1) ** (1.0 / (1.0 - hp.sigma)))


def sample_ggp_weights(hp: Hyperparams, eps: float, rng) -> GgpDraw:
    """Draw the GGP jumps above eps; exact by adaptive thinning."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = _as_rng(rng)
    w0s = thinned_ggp_points(hp.alpha, hp.sigma, hp.tau, eps, rng)
    w0s = np.sort(w0s)[::-1].copy()
    remainder = hp.alpha * levy_integral(
        lambda w: w, hp.sigma, hp.tau, lo=0.0, hi=eps, zero_order=1,
    ) / special.gamma(1.0 - hp.sigma)
    return GgpDraw(w0s=w0s, truncation_eps=eps, remainder_mass_estimate=remainder)


def sample_scores(w0s: np.ndarray, hp: Hyperparams, rng) -> NodeParamArray:
    """Attach scores to base weights: binary core slot, gamma community slots."""
    rng = _as_rng(rng)
    w0s = np.asarray(w0s, dtype=float)
    if (w0s <= 0).any():
        raise ValueError("base weights must be positive")
    n = w0s.shape[0]
    beta = np.empty((n, hp.k))
    beta[:, 0] = rng.random(n) < -np.expm1(-w0s)
    for k, (a_k, b_k) in enumerate(zip(hp.a, hp.b), start=1):
        beta[:, k] = rng.gamma(a_k, 1.0 / b_k, size=n)
    return NodeParamArray(w0s, beta)


def _poissonized_edges(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Ordered hit pairs of the latent edge process; (m, 2) int64."""
    hits = []
    for k in range(w.shape[1]):
        wk = w[:, k]
        s = wk.sum()
        if s <= 0:
            continue
        d = rng.poisson(s * s)
        if d == 0:
            continue
        cdf = np.cumsum(wk)
        cdf /= cdf[-1]
        i = np.searchsorted(cdf, rng.random(d))
        j = np.searchsorted(cdf, rng.random(d))
        hits.append(np.stack([i, j], axis=1))
    if not hits:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(hits).astype(np.int64)


def sample_graph(params: Sequence, rng, method: str = "poisson") -> tuple[Graph, np.ndarray]:
    """Realise a graph from node weights; isolated nodes are dropped.

    Returns (graph, kept) where kept[v] is the index of graph-node v in the
    input weight list.  method="pairwise" uses the O(n^2) per-pair Bernoulli
    sampler (kept as a validation reference for the default).
    """
    rng = _as_rng(rng)
    pa = NodeParamArray.from_params(params)
    if len(pa) == 0:
        raise ValueError("params must be nonempty")
    w = pa.w
    if method == "poisson":
        pairs = _poissonized_edges(w, rng)
        if pairs.size:
            lo = np.minimum(pairs[:, 0], pairs[:, 1])
            hi = np.maximum(pairs[:, 0], pairs[:, 1])
            pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    elif method == "pairwise":
        n = len(pa)
        rate = 2.0 * (w @ w.T)
        np.fill_diagonal(rate, 0.5 * np.diag(rate))
        prob = -np.expm1(-rate)
        iu, ju = np.triu_indices(n)
        keep = rng.random(iu.shape[0]) < prob[iu, ju]
        pairs = np.stack([iu[keep], ju[keep]], axis=1)
    else:
        raise ValueError(f"unknown method {method!r}")
    if pairs.size == 0:
        return Graph(0, ()), np.empty(0, dtype=np.int64)
    kept = np.unique(pairs)
    relab = np.searchsorted(kept, pairs)
    graph = Graph.from_edge_array(kept.shape[0], relab)
    return graph, kept


def simulate_graph(hp: Hyperparams, rng, eps: float | None = None
                   ) -> tuple[Graph, NodeParamArray, GgpDraw]:
    """GGP weights -> scores -> graph; returns the graph with the kept
    nodes' parameters (aligned to graph indices) and the raw weight draw."""
    rng = _as_rng(rng)
    if eps is None:
        eps = default_truncation(hp)
    draw = sample_ggp_weights(hp, eps, rng)
    if draw.w0s.size == 0:
        return Graph(0, ()), NodeParamArray(np.empty(0), np.empty((0, hp.k))), draw
    params = sample_scores(draw.w0s, hp, rng)
    graph, kept = sample_graph(params, rng)
    return graph, params.subset(kept), draw


def _sample_powerlaw_degrees(n: int, gamma_exp: float, rng: np.random.Generator) -> np.ndarray:
    support = np.arange(1, n, dtype=float)
    pmf = support**-gamma_exp
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    deg = 1 + np.searchsorted(cdf, rng.random(n))
    return np.sort(deg)


def sample_holme_graph(cfg: HolmeConfig, rng=None) -> tuple[Graph, np.ndarray]:
    """Configuration-model core-periphery graph with logistic core membership.

    Core nodes, visited in increasing target degree, attach their stubs to
    the highest-degree nodes that still have free stubs; leftover stubs are
    then paired uniformly, discarding loops and duplicate edges.  Returns
    (graph, core_labels) over all n_nodes (isolated nodes retained here so
    labels align; the caller may drop them).
    """
    rng = _as_rng(cfg.seed if rng is None else rng)
    n = cfg.n_nodes
    m = _sample_powerlaw_degrees(n, cfg.powerlaw_exponent, rng)
    q = special.expit(2.0 * cfg.kappa * (m - cfg.m_min))
    core = rng.random(n) < q

    deg = np.zeros(n, dtype=np.int64)
    adj: set[tuple[int, int]] = set()

    def add_edge(i: int, j: int) -> bool:
        key = (i, j) if i < j else (j, i)
        if i == j or key in adj:
            return False
        adj.add(key)
        deg[i] += 1
        deg[j] += 1
        return True

    # Step 3: preferential wiring of core stubs toward high-degree nodes.
    by_degree_desc = np.argsort(-m, kind="stable")
    for i in np.flatnonzero(core):
        if deg[i] >= m[i]:
            continue
        for j in by_degree_desc:
            if deg[i] >= m[i]:
                break
            if j == i or m[j] < m[i] or deg[j] >= m[j]:
                continue
            add_edge(int(i), int(j))

    # Step 4: pair the remaining stubs uniformly at random, rejecting loops
    # and multi-edges.  Rejected stubs are reshuffled a few times; whatever
    # colliding pairs remain are completed greedily and the unpairable rest
    # discarded (realised degrees never exceed targets).
    free = m - deg
    stubs = np.repeat(np.arange(n), np.maximum(free, 0))
    retries = 0
    while stubs.size >= 2 and retries <= cfg.max_retries:
        stubs = rng.permutation(stubs)
        half = stubs.size // 2
        leftover = list(stubs[2 * half:])
        for i, j in zip(stubs[:half], stubs[half: 2 * half]):
            if not add_edge(int(i), int(j)):
                leftover.extend((int(i), int(j)))
        if len(leftover) == stubs.size:
            break  # a whole pass without progress; go greedy
        retries += 1
        stubs = np.asarray(leftover, dtype=np.int64)
    remaining = np.bincount(stubs, minlength=n) if stubs.size else np.zeros(n, dtype=np.int64)
    guard = 0
    while True:
        nodes = np.flatnonzero(remaining)
        placed = False
        for ii in range(nodes.size):
            for jj in range(ii + 1, nodes.size):
                i, j = int(nodes[ii]), int(nodes[jj])
                if add_edge(i, j):
                    remaining[i] -= 1
                    remaining[j] -= 1
                    placed = True
                    break
            if placed:
                break
        if not placed:
            break
        guard += 1
        if guard > stubs.size + 1:
            raise GenerationFailure("could not place remaining stubs", retries)
    graph = Graph.from_edges(n, adj)
    return graph, core


def parameter_sweep(grid: Sequence[Hyperparams], replicates: int, seed,
                    eps: float | None = None) -> pd.DataFrame:
    """Simulate ``replicates`` graphs per grid point and tally subgraph counts.

    Deterministic given the seed: every (grid point, replicate) cell uses an
    independent child generator spawned from the master seed, so results do
    not depend on execution order.
    """
    if not grid:
        raise ValueError("grid must be nonempty")
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    seq = np.random.SeedSequence(seed)
    children = seq.spawn(len(grid) * replicates)
    rows = []
    for gi, hp in enumerate(grid):
        point_eps = eps if eps is not None else default_truncation(hp)
        for rep in range(replicates):
            rng = np.random.default_rng(children[gi * replicates + rep])
            graph, kept_params, _ = simulate_graph(hp, rng, eps=point_eps)
            part = partition_core_periphery(kept_params, graph)
            counts = subgraph_counts(graph, part)
            row = {
                "alpha": hp.alpha, "sigma": hp.sigma, "tau": hp.tau,
                "a": hp.a[0], "b": hp.b[0], "k": hp.k,
                "eps": point_eps, "replicate": rep,
            }
            row.update(counts.as_dict())
            rows.append(row)
    return pd.DataFrame(rows)
