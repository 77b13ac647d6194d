"""Joint-distribution self-consistency harness for the sampler.

Alternates data regeneration with posterior sweeps and compares the
resulting marginals against plain forward simulation: if every transition
targets the right conditional, both procedures sample the same joint law.

The check runs on the eps-truncated model, where exactness is attainable:
atoms live above a floor eps, the truncated Laplace exponent replaces the
full one, HMC proposals below the floor are rejected, and the total-mass
proposal is purely atomic (the Gaussian remainder is disabled) with the
atom decomposition carried alongside so data can be regenerated.  The only
deliberate approximation left is the linearised core-flag Gibbs step.

Priors here must be informative enough to keep graphs at a desk-size
budget; conditioning on a node-count window is a y-measurable event and
biases neither side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..model import Graph, Hyperparams, NodeParamArray
from ..simulate import sample_graph, sample_scores, thinned_ggp_points
from .chain import ChainState, SamplerConfig, sweep
from .latent import resample_latent_counts

__all__ = ["GewekeConfig", "GewekeResult", "run_geweke"]


@dataclass(frozen=True)
class GewekeConfig:
    """Truncated test model plus chain settings for the harness."""

    eps: float = 0.02
    k: int = 2
    # (shape, rate) gamma priors; means chosen for ~30-node graphs
    prior_alpha: tuple = (40.0, 2.0)
    prior_one_minus_sigma: tuple = (16.0, 20.0)
    prior_tau: tuple = (30.0, 30.0)
    prior_a: tuple = (12.0, 30.0)
    prior_b: tuple = (20.0, 25.0)
    n_rounds: int = 10_000
    sweeps_per_round: int = 2
    min_nodes: int = 4
    max_nodes: int = 150
    p_lat: float = 0.5
    hmc_leapfrog_steps: int = 5
    hmc_step_size: float = 0.04
    phi_walk_scale: float = 0.05
    seed: int = 0

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            n_iters=10, n_burnin=1, k=self.k, p_lat=self.p_lat,
            hmc_leapfrog_steps=self.hmc_leapfrog_steps,
            hmc_step_size=self.hmc_step_size,
            eps_mass=self.eps, w0_floor=self.eps, mass_w_min=self.eps,
            mass_gaussian_remainder=False, adapt=False,
            phi_walk_scale=self.phi_walk_scale,
            priors={
                "alpha": self.prior_alpha,
                "one_minus_sigma": self.prior_one_minus_sigma,
                "tau": self.prior_tau,
                "a": self.prior_a,
                "b": self.prior_b,
            })


@dataclass
class GewekeResult:
    stats: tuple
    forward_moments: dict
    chain_moments: dict
    z_scores: dict
    max_abs_z: float

    def passed(self, threshold: float = 4.0) -> bool:
        return self.max_abs_z < threshold


def _draw_hyperparams(cfg: GewekeConfig, rng) -> Hyperparams:
    sh, rt = cfg.prior_alpha
    alpha = rng.gamma(sh, 1.0 / rt)
    sh, rt = cfg.prior_one_minus_sigma
    sigma = 1.0 - rng.gamma(sh, 1.0 / rt)
    sh, rt = cfg.prior_tau
    tau = rng.gamma(sh, 1.0 / rt)
    sh, rt = cfg.prior_a
    a = tuple(rng.gamma(sh, 1.0 / rt) for _ in range(cfg.k - 1))
    sh, rt = cfg.prior_b
    b = tuple(rng.gamma(sh, 1.0 / rt) for _ in range(cfg.k - 1))
    if sigma <= 0 and tau <= 0:
        tau = 1e-6
    return Hyperparams(alpha=float(alpha), sigma=float(sigma), tau=float(tau),
                       a=a, b=b)


def _draw_atoms(hp: Hyperparams, cfg: GewekeConfig, rng) -> NodeParamArray:
    w0 = thinned_ggp_points(hp.alpha, hp.sigma, hp.tau, cfg.eps, rng)
    if w0.size == 0:
        return NodeParamArray(np.empty(0), np.empty((0, cfg.k)))
    return sample_scores(w0, hp, rng)


def _forward_draw(cfg: GewekeConfig, rng):
    """One (theta, y) draw from the prior conditioned on the window."""
    while True:
        hp = _draw_hyperparams(cfg, rng)
        atoms = _draw_atoms(hp, cfg, rng)
        if len(atoms) == 0:
            continue
        graph, kept = sample_graph(atoms, rng)
        if cfg.min_nodes <= graph.n_nodes <= cfg.max_nodes:
            return hp, atoms, graph, kept


def _statistics(hp: Hyperparams, atoms: NodeParamArray,
                kept: np.ndarray) -> np.ndarray:
    w = atoms.w[kept]
    return np.array([
        hp.sigma,
        math.log(hp.alpha) + hp.sigma * math.log(hp.tau),
        hp.b[0] * hp.tau,
        float(w.mean(axis=1).mean()),
    ])


STAT_NAMES = ("sigma", "log_alpha_tilde", "b_tilde", "mean_w")


def _batch_se(series: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean from batch means (autocorrelated chain)."""
    n = series.shape[0]
    size = n // n_batches
    trimmed = series[: size * n_batches].reshape(n_batches, size)
    means = trimmed.mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def run_geweke(cfg: GewekeConfig) -> GewekeResult:
    """Run both simulators and z-test means and second moments."""
    rng_f = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    forward = np.empty((cfg.n_rounds, len(STAT_NAMES)))
    for r in range(cfg.n_rounds):
        hp, atoms, graph, kept = _forward_draw(cfg, rng_f)
        forward[r] = _statistics(hp, atoms, kept)

    rng_c = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
    scfg = cfg.sampler_config()
    chain = np.empty((cfg.n_rounds, len(STAT_NAMES)))
    hp, atoms, graph, kept = _forward_draw(cfg, rng_c)
    unobserved_mask = np.ones(len(atoms), dtype=bool)
    unobserved_mask[kept] = False
    hidden_w0 = atoms.w0[unobserved_mask].copy()
    hidden_beta = atoms.beta[unobserved_mask].copy()
    state = ChainState(
        w0=atoms.w0[kept].copy(), beta=atoms.beta[kept].copy(),
        w_star=(hidden_beta * hidden_w0[:, None]).sum(axis=0)
        if hidden_w0.size else np.zeros(cfg.k),
        hp=hp, core_slot=True)
    gibbs_cfg = replace(scfg, p_lat=0.0)
    state.latent = resample_latent_counts(graph, state, gibbs_cfg, rng_c)
    beta1_prev = state.beta[:, 0].copy()
    for r in range(cfg.n_rounds):
        for _ in range(cfg.sweeps_per_round):
            meters, draw, prev_flags = sweep(
                state, graph, scfg, rng_c, scfg.hmc_step_size,
                scfg.phi_walk_scale, beta1_prev=beta1_prev, return_atoms=True)
            beta1_prev = prev_flags
            if draw is not None:  # accepted mass move: new unobserved atoms
                hidden_w0 = draw.atom_w0.copy()
                hidden_beta = draw.atom_beta.copy()
        # Regenerate data from the full atom set.
        all_w0 = np.concatenate([state.w0, hidden_w0])
        all_beta = np.concatenate([state.beta, hidden_beta])
        atoms = NodeParamArray(all_w0, all_beta)
        for attempt in range(20_000):
            graph_new, kept_new = sample_graph(atoms, rng_c)
            if cfg.min_nodes <= graph_new.n_nodes <= cfg.max_nodes:
                break
        else:
            raise RuntimeError("node-count window unreachable; widen it")
        chain[r] = _statistics(state.hp, atoms, kept_new)
        graph = graph_new
        unobserved_mask = np.ones(len(atoms), dtype=bool)
        unobserved_mask[kept_new] = False
        hidden_w0 = all_w0[unobserved_mask].copy()
        hidden_beta = all_beta[unobserved_mask].copy()
        state = ChainState(
            w0=all_w0[kept_new].copy(), beta=all_beta[kept_new].copy(),
            w_star=(hidden_beta * hidden_w0[:, None]).sum(axis=0)
            if hidden_w0.size else np.zeros(cfg.k),
            hp=state.hp, core_slot=True, divergences=state.divergences)
        state.latent = resample_latent_counts(graph, state, gibbs_cfg, rng_c)
        beta1_prev = state.beta[:, 0].copy()

    z_scores = {}
    fw_m, ch_m = {}, {}
    for s, name in enumerate(STAT_NAMES):
        for moment, transform in (("mean", lambda x: x), ("second", np.square)):
            f = transform(forward[:, s])
            c = transform(chain[:, s])
            se = math.hypot(f.std(ddof=1) / math.sqrt(f.shape[0]), _batch_se(c))
            z = (c.mean() - f.mean()) / se if se > 0 else 0.0
            key = f"{name}_{moment}"
            z_scores[key] = float(z)
            fw_m[key] = float(f.mean())
            ch_m[key] = float(c.mean())
    max_abs = max(abs(z) for z in z_scores.values())
    return GewekeResult(stats=STAT_NAMES, forward_moments=fw_m,
                        chain_moments=ch_m, z_scores=z_scores,
                        max_abs_z=max_abs)
