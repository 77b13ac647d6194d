"""Chain orchestration: state, configuration, initialization and sweeps.

One iteration performs, in order: the HMC update of (w0, gamma scores) with
the Gibbs pass over the binary core flags; the joint MH move on
(hyperparameters, size parameter, total masses); and the latent-count
refresh.  Step sizes and walk scales adapt during burn-in only and are
frozen afterwards so the recorded chain targets a fixed kernel.

Initialization runs a short chain of the all-gamma variant (no binary core
slot) and maps the community whose thresholded members form the densest
subgraph onto the core flags, which keeps the core slot from locking onto a
community mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import special

from ..model import Graph, Hyperparams
from .hmc import PotentialSpec, find_initial_step, gibbs_update_beta1, hmc_update
from .hyper import laplace_exponent, mh_update_hyperparams, sample_total_masses
from .latent import LatentCounts, resample_latent_counts

__all__ = [
    "SamplerConfig",
    "ChainState",
    "ChainSamples",
    "approx_log_posterior",
    "initialize_chain",
    "run_chain",
    "run_chains",
]

_PRIOR_KEYS = ("alpha", "one_minus_sigma", "tau", "a", "b")


@dataclass(frozen=True)
class SamplerConfig:
    """Settings for one MCMC run."""

    n_iters: int = 50_000
    n_burnin: int = 37_500
    thin: int = 25
    n_chains: int = 3
    k: int = 2
    hmc_leapfrog_steps: int = 10
    hmc_step_size: float = 0.05
    p_lat: float = 0.5
    eps_mass: float | None = None          # None: 1e-6 * tau^(sigma-1)
    prior_shape: float = 0.01
    prior_rate: float = 0.01
    priors: dict | None = None             # per-parameter (shape, rate) overrides
    init_iters: int = 2000
    init_hp: Hyperparams | None = None
    node_stride: int = 1
    seed: int = 0
    w0_floor: float = 0.0                  # >0: truncated-support variant
    mass_w_min: float = 0.0                # psi truncation, matches w0_floor
    mass_gaussian_remainder: bool = True
    phi_walk_scale: float = 0.02
    adapt: bool = True
    checkpoint_every: int = 10_000
    beta1_update: str = "exact"            # or "linearized" (biased, see docs)

    def __post_init__(self):
        if not 0.0 <= self.p_lat <= 1.0:
            raise ValueError("p_lat must lie in [0, 1]")
        if self.n_burnin >= self.n_iters:
            raise ValueError("n_burnin must be smaller than n_iters")
        if self.k < 2:
            raise ValueError("need K >= 2")

    def resolved_priors(self) -> dict:
        out = {key: (self.prior_shape, self.prior_rate) for key in _PRIOR_KEYS}
        if self.priors:
            out.update(self.priors)
        return out

    def resolved_eps_mass(self, hp: Hyperparams) -> float:
        if self.eps_mass is not None:
            return self.eps_mass
        try:
            eps = 1e-6 * hp.tau ** (hp.sigma - 1.0) if hp.tau > 0 else 1e-6
        except OverflowError:
            eps = math.inf
        if not math.isfinite(eps):
            return 1e6  # tail-only proposals; atomic part will be empty
        return max(eps, 1e-300)


@dataclass
class ChainState:
    """Mutable sampler state for one chain (never shared across threads)."""

    w0: np.ndarray
    beta: np.ndarray
    w_star: np.ndarray
    hp: Hyperparams
    latent: LatentCounts | None = None
    core_slot: bool = True
    divergences: int = 0

    def potential_spec(self, m: np.ndarray) -> PotentialSpec:
        return PotentialSpec(
            m=m, beta0=self.beta[:, 0], sigma=self.hp.sigma, tau=self.hp.tau,
            a=np.asarray(self.hp.a), b=np.asarray(self.hp.b),
            w_star=self.w_star, core_slot=self.core_slot,
        )

    @property
    def n_nodes(self) -> int:
        return self.w0.shape[0]

    @property
    def k(self) -> int:
        return self.beta.shape[1]

    def weights(self) -> np.ndarray:
        return self.beta * self.w0[:, None]

    def snapshot(self) -> np.ndarray:
        return np.column_stack([self.w0, self.beta])

    def copy(self) -> "ChainState":
        return ChainState(
            w0=self.w0.copy(), beta=self.beta.copy(), w_star=self.w_star.copy(),
            hp=self.hp, latent=self.latent.copy() if self.latent else None,
            core_slot=self.core_slot, divergences=self.divergences,
        )


@dataclass(frozen=True)
class ChainSamples:
    """Thinned post-burn-in records of one chain."""

    iters: np.ndarray                # (R,)
    hp_records: tuple[Hyperparams, ...]
    total_masses: np.ndarray         # (R, K)
    node_snapshots: np.ndarray       # (R, N, 1+K): w0 then beta
    log_posterior: np.ndarray        # (R,)
    acceptance: dict
    thin: int
    n_burnin: int

    def __len__(self) -> int:
        return self.iters.shape[0]

    def identifiable(self) -> pd.DataFrame:
        """The parameter combinations the posterior pins down:
        log(alpha tau^sigma), sigma, a_k, b_k tau, and the mean total mass."""
        rows = []
        for hp, masses in zip(self.hp_records, self.total_masses):
            row = {
                "log_alpha_tilde": math.log(hp.alpha) + hp.sigma * math.log(hp.tau),
                "sigma": hp.sigma,
                "wbar_star": float(np.mean(masses)),
            }
            for kk, (ak, bk) in enumerate(zip(hp.a, hp.b), start=2):
                row[f"a_{kk}"] = ak
                row[f"b_tilde_{kk}"] = bk * hp.tau
            rows.append(row)
        return pd.DataFrame(rows)

    def core_flag_matrix(self) -> np.ndarray:
        """(R, N) binary matrix of sampled core flags."""
        return self.node_snapshots[:, :, 1]


def approx_log_posterior(state: ChainState, graph: Graph,
                         cfg: SamplerConfig | None = None) -> float:
    """Approximate joint log density (up to a constant) at the state.

    The exact graph likelihood and node-level priors combined with the
    linearised treatment of the unobserved mass, whose integral contributes
    -alpha * psi(2 sum_i w_i; phi); total masses do not appear.
    """
    cfg = cfg or SamplerConfig()
    hp = state.hp
    w = state.weights()
    ea = graph.edge_array
    if len(state.w0) != graph.n_nodes:
        raise ValueError("state does not match graph")
    loglik = 0.0
    if ea.size:
        q = (w[ea[:, 0]] * w[ea[:, 1]]).sum(axis=1)
        loops = ea[:, 0] == ea[:, 1]
        rate = np.where(loops, q, 2.0 * q)
        loglik = float(np.log(-np.expm1(-rate)).sum() + rate.sum())
    s_vec = w.sum(axis=0)
    loglik -= float(np.dot(s_vec, s_vec))

    w0 = state.w0
    logprior = float(-(1.0 + hp.sigma) * np.log(w0).sum() - hp.tau * w0.sum()
                     - len(w0) * special.gammaln(1.0 - hp.sigma))
    if state.core_slot:
        is_core = state.beta[:, 0] > 0
        logprior += float(np.log(-np.expm1(-w0[is_core])).sum() - w0[~is_core].sum())
        gamma_scores = state.beta[:, 1:]
    else:
        gamma_scores = state.beta
    for kk in range(gamma_scores.shape[1]):
        ak, bk = hp.a[kk], hp.b[kk]
        x = gamma_scores[:, kk]
        logprior += float((ak * math.log(bk) - special.gammaln(ak)
                           + (ak - 1.0) * np.log(x) - bk * x).sum())

    psi = laplace_exponent(2.0 * s_vec, hp, core_slot=state.core_slot,
                           w_min=cfg.mass_w_min)
    logprior += len(w0) * math.log(hp.alpha) - hp.alpha * psi

    priors = cfg.resolved_priors()
    sh, rt = priors["alpha"]
    hyper = sh * math.log(rt) - special.gammaln(sh) + (sh - 1) * math.log(hp.alpha) - rt * hp.alpha
    sh, rt = priors["one_minus_sigma"]
    hyper += (sh - 1) * math.log(1 - hp.sigma) - rt * (1 - hp.sigma) + sh * math.log(rt) - special.gammaln(sh)
    sh, rt = priors["tau"]
    hyper += (sh - 1) * math.log(hp.tau) - rt * hp.tau + sh * math.log(rt) - special.gammaln(sh)
    for key, vals in (("a", hp.a), ("b", hp.b)):
        sh, rt = priors[key]
        for x in vals:
            hyper += (sh - 1) * math.log(x) - rt * x + sh * math.log(rt) - special.gammaln(sh)
    total = loglik + logprior + hyper
    if not math.isfinite(total):
        raise FloatingPointError("non-finite approximate log posterior")
    return total


@dataclass
class _Adaptation:
    """Dual averaging for the HMC step plus Robbins-Monro walk scaling."""

    log_step: float
    target_hmc: float = 0.65
    target_walk: float = 0.23
    mu: float = 0.0
    h_bar: float = 0.0
    log_step_bar: float = 0.0
    count: int = 0
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    log_walk: float = math.log(0.02)

    def __post_init__(self):
        self.mu = math.log(10.0) + self.log_step

    def update_hmc(self, accept_prob: float) -> float:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1 - frac) * self.h_bar + frac * (self.target_hmc - accept_prob)
        self.log_step = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** -self.kappa
        self.log_step_bar = eta * self.log_step + (1 - eta) * self.log_step_bar
        return math.exp(self.log_step)

    def update_walk(self, accepted: bool) -> float:
        eta = 0.5 * self.count ** -0.6 if self.count else 0.05
        self.log_walk += eta * ((1.0 if accepted else 0.0) - self.target_walk)
        self.log_walk = min(max(self.log_walk, math.log(1e-4)), math.log(2.0))
        return math.exp(self.log_walk)


def sweep(state: ChainState, graph: Graph, cfg: SamplerConfig,
          rng: np.random.Generator, hmc_step: float, walk_scale: float,
          beta1_prev: np.ndarray | None = None, return_atoms: bool = False):
    """One full iteration; mutates state, returns (meters, atoms-or-None)."""
    m = state.latent.row_sums()
    accepted_hmc, hmc_prob = hmc_update(state, state.latent, cfg, rng,
                                        step_size=hmc_step, m=m)
    prev_flags = state.beta[:, 0].copy()
    if state.core_slot:
        gibbs_update_beta1(state, state.latent, rng, beta1_prev=beta1_prev, m=m,
                           method=cfg.beta1_update)
    accepted_mh, atoms = mh_update_hyperparams(state, cfg, rng, scale=walk_scale,
                                               return_atoms=return_atoms)
    state.latent = resample_latent_counts(graph, state, cfg, rng)
    meters = {"hmc": accepted_hmc, "hmc_prob": hmc_prob, "mh": accepted_mh}
    return meters, atoms, prev_flags


def _prior_state(graph: Graph, hp: Hyperparams, cfg: SamplerConfig,
                 rng: np.random.Generator, core_slot: bool) -> ChainState:
    """Independent size-biased draws: the documented init_iters = 0 fallback."""
    n = graph.n_nodes
    shape = max(1.0 - hp.sigma, 0.05)
    w0 = rng.gamma(shape, 1.0 / (hp.tau + 1.0), size=n) + 1e-6
    n_gamma = len(hp.a)
    k = n_gamma + 1 if core_slot else n_gamma
    beta = np.empty((n, k))
    col = 0
    if core_slot:
        beta[:, 0] = rng.random(n) < -np.expm1(-w0)
        col = 1
    for kk in range(n_gamma):
        beta[:, col + kk] = rng.gamma(hp.a[kk], 1.0 / hp.b[kk], size=n) + 1e-9
    state = ChainState(w0=w0, beta=beta, w_star=np.zeros(k), hp=hp,
                       core_slot=core_slot)
    lam = 2.0 * state.weights().sum(axis=0)
    state.w_star = sample_total_masses(
        hp, lam, cfg.resolved_eps_mass(hp), rng, core_slot=core_slot,
        gaussian_remainder=cfg.mass_gaussian_remainder)
    zero_cfg = replace(cfg, p_lat=0.0)
    state.latent = resample_latent_counts(graph, state, zero_cfg, rng)
    return state


def _density_of_threshold_community(graph: Graph, members: np.ndarray) -> float:
    idx = np.flatnonzero(members)
    if idx.size < 2:
        return -1.0
    mask = np.zeros(graph.n_nodes, dtype=bool)
    mask[idx] = True
    ea = graph.edge_array
    inside = mask[ea[:, 0]] & mask[ea[:, 1]]
    possible = idx.size * (idx.size + 1) / 2.0
    return float(inside.sum() / possible)


def initialize_chain(graph: Graph, cfg: SamplerConfig, rng) -> ChainState:
    """Short all-gamma run, then map the densest community onto the core.

    With init_iters = 0 the state falls back to independent prior-style
    draws.  Deterministic given the generator state.
    """
    if graph.n_nodes == 0:
        raise ValueError("graph must be nonempty")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    k = cfg.k
    base_hp = cfg.init_hp or Hyperparams(
        alpha=float(max(graph.n_nodes, 2)), sigma=0.0, tau=1.0,
        a=tuple([0.5] * (k - 1)), b=tuple([0.5] * (k - 1)))
    if cfg.init_iters <= 0:
        return _prior_state(graph, base_hp, cfg, rng, core_slot=True)

    # Variant run: K gamma slots, no binary core.
    var_hp = base_hp.replace(a=(base_hp.a[0],) + base_hp.a,
                             b=(base_hp.b[0],) + base_hp.b)
    var_cfg = replace(cfg, p_lat=0.0, k=k)
    state = _prior_state(graph, var_hp, var_cfg, rng, core_slot=False)
    hmc_step = find_initial_step(state, state.latent, rng)
    adapt = _Adaptation(log_step=math.log(hmc_step))
    walk_scale = cfg.phi_walk_scale
    for _ in range(cfg.init_iters):
        meters, _, _ = sweep(state, graph, var_cfg, rng, hmc_step, walk_scale)
        hmc_step = adapt.update_hmc(meters["hmc_prob"])
        walk_scale = adapt.update_walk(meters["mh"])

    w = state.weights()
    densities = []
    for kk in range(k):
        members = w[:, kk] > np.median(w[:, kk])
        densities.append(_density_of_threshold_community(graph, members))
    k_star = int(np.argmax(densities))
    core_flags = (w[:, k_star] > np.median(w[:, k_star])).astype(float)

    others = [kk for kk in range(k) if kk != k_star]
    beta = np.column_stack([core_flags] + [state.beta[:, kk] for kk in others])
    hp = base_hp.replace(
        sigma=state.hp.sigma, tau=state.hp.tau,
        alpha=state.hp.alpha,
        a=tuple(state.hp.a[kk] for kk in others),
        b=tuple(state.hp.b[kk] for kk in others))
    out = ChainState(w0=state.w0.copy(), beta=beta,
                     w_star=np.zeros(k), hp=hp, core_slot=True)
    lam = 2.0 * out.weights().sum(axis=0)
    out.w_star = sample_total_masses(
        hp, lam, cfg.resolved_eps_mass(hp), rng, core_slot=True,
        gaussian_remainder=cfg.mass_gaussian_remainder)
    out.latent = resample_latent_counts(graph, out, replace(cfg, p_lat=0.0), rng)
    return out


def run_chain(graph: Graph, cfg: SamplerConfig, rng,
              progress_callback=None, checkpoint_callback=None,
              resume: dict | None = None) -> ChainSamples:
    """Initialize then run n_iters sweeps, recording thinned samples.

    ``progress_callback(iteration, meters)`` fires on every record;
    ``checkpoint_callback(payload)`` fires every checkpoint_every
    iterations with everything needed to resume (pass the payload back as
    ``resume``, with the generator restored separately, to reproduce the
    uninterrupted run exactly).
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n_records_possible = (cfg.n_iters - cfg.n_burnin) // max(cfg.thin, 1)
    if n_records_possible <= 0:
        warnings.warn("thin exceeds the post-burn-in length; no samples "
                      "will be recorded", stacklevel=2)
    if resume is not None:
        state = resume["state"]
        start_iter = resume["iter"]
        records = resume["records"]
        adapt = resume["adapt"]
        hmc_step = resume["hmc_step"]
        walk_scale = resume["walk_scale"]
        beta1_prev = resume["beta1_prev"]
        hmc_acc = resume["hmc_acc"]
        mh_acc = resume["mh_acc"]
    else:
        state = initialize_chain(graph, cfg, rng)
        start_iter = 0
        records = []
        step0 = find_initial_step(state, state.latent, rng)
        adapt = _Adaptation(log_step=math.log(step0))
        hmc_step, walk_scale = step0, cfg.phi_walk_scale
        hmc_acc = mh_acc = 0
        beta1_prev = state.beta[:, 0].copy() if state.core_slot else None
    for it in range(start_iter, cfg.n_iters):
        meters, _, prev_flags = sweep(state, graph, cfg, rng, hmc_step, walk_scale,
                                      beta1_prev=beta1_prev)
        beta1_prev = prev_flags
        hmc_acc += meters["hmc"]
        mh_acc += meters["mh"]
        if cfg.adapt and it < cfg.n_burnin:
            hmc_step = adapt.update_hmc(meters["hmc_prob"])
            walk_scale = adapt.update_walk(meters["mh"])
            if it == cfg.n_burnin - 1:
                hmc_step = math.exp(adapt.log_step_bar)
        if it >= cfg.n_burnin and (it - cfg.n_burnin) % max(cfg.thin, 1) == 0:
            logpost = approx_log_posterior(state, graph, cfg)
            records.append({
                "iter": it, "hp": state.hp, "w_star": state.w_star.copy(),
                "snapshot": state.snapshot(), "logpost": logpost,
                "acc_hmc": hmc_acc / (it + 1), "acc_mh": mh_acc / (it + 1),
            })
            if progress_callback is not None:
                progress_callback(it, {"acc_hmc": hmc_acc / (it + 1),
                                       "acc_mh": mh_acc / (it + 1),
                                       "logpost": logpost})
        if checkpoint_callback is not None and (it + 1) % cfg.checkpoint_every == 0:
            checkpoint_callback({
                "iter": it + 1, "state": state, "records": records,
                "adapt": adapt, "hmc_step": hmc_step, "walk_scale": walk_scale,
                "beta1_prev": beta1_prev, "hmc_acc": hmc_acc, "mh_acc": mh_acc,
            })
    if records:
        iters = np.array([r["iter"] for r in records])
        hps = tuple(r["hp"] for r in records)
        masses = np.stack([r["w_star"] for r in records])
        stride = max(cfg.node_stride, 1)
        snaps = np.stack([r["snapshot"] for r in records[::1]])[:, ::stride, :] \
            if stride > 1 else np.stack([r["snapshot"] for r in records])
        logpost = np.array([r["logpost"] for r in records])
    else:
        k = cfg.k
        iters = np.empty(0, dtype=int)
        hps = ()
        masses = np.empty((0, k))
        snaps = np.empty((0, graph.n_nodes, 1 + k))
        logpost = np.empty(0)
    acceptance = {"hmc": hmc_acc / max(cfg.n_iters, 1),
                  "mh": mh_acc / max(cfg.n_iters, 1),
                  "divergences": state.divergences}
    return ChainSamples(iters=iters, hp_records=hps, total_masses=masses,
                        node_snapshots=snaps, log_posterior=logpost,
                        acceptance=acceptance, thin=cfg.thin, n_burnin=cfg.n_burnin)


def _chain_worker(args):
    graph, cfg, seed = args
    return run_chain(graph, cfg, np.random.default_rng(seed))


def run_chains(graph: Graph, cfg: SamplerConfig, jobs: int = 1) -> list[ChainSamples]:
    """Run cfg.n_chains independent chains, optionally across processes.

    Each chain gets its own generator spawned from cfg.seed, so the result
    is identical however the chains are scheduled.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    tasks = [(graph, cfg, seeds[c]) for c in range(cfg.n_chains)]
    if jobs <= 1 or cfg.n_chains == 1:
        return [_chain_worker(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=min(jobs, cfg.n_chains)) as pool:
        return list(pool.map(_chain_worker, tasks))
