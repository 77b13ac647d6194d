"""Hyperparameter and total-mass updates.

The Laplace exponent of the weight measure,

    psi(t) = int (1 - E[exp(-w0 sum_k t_k beta_k)]) rho0(dw0),

drives both the gamma proposal for the size parameter and the acceptance
ratio.  The score expectation factorises: the binary core slot contributes
e^{-w0} + (1-e^{-w0}) e^{-t_1 w0} and each gamma slot (1 + t_k w0/b_k)^{-a_k}.

Total masses are proposed from the exponentially tilted law of the
unobserved-node mass vector: jumps above eps_mass come from thinning the
tilted Poisson process exactly; the sub-eps remainder is approximated by a
moment-matched Gaussian truncated to the nonnegative orthant.

The joint (phi, alpha, w_*) Metropolis-Hastings ratio collapses: the
intractable mass density and every alpha term cancel between target and
proposal, leaving prior and Levy-density ratios, exp(sum w*_old^2 -
w*_new^2), and the factor ((b_a + psi(lam_rev; phi)) / (b_a + psi(lam;
phi_new)))^(a_a + N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from ..quadrature import QuadratureError, levy_integral, levy_integral_multi
from ..simulate import SimulationBudgetError, thinned_ggp_points

__all__ = ["laplace_exponent", "sample_total_masses", "mh_update_hyperparams"]


def _log_slot_mgf(w: np.ndarray, t: np.ndarray, a: np.ndarray, b: np.ndarray,
                  core_slot: bool) -> np.ndarray:
    """log E[exp(-w sum_k t_k beta_k)] as a function of the base weight w."""
    if core_slot:
        out = np.logaddexp(-w, np.log(-np.expm1(-w)) - t[0] * w)
        gamma_t = t[1:]
    else:
        out = np.zeros_like(w)
        gamma_t = t
    for tk, ak, bk in zip(gamma_t, a, b):
        out = out - ak * np.log1p(tk * w / bk)
    return out


def laplace_exponent(t, hp, core_slot: bool = True, w_min: float = 0.0,
                     rtol: float = 1e-8) -> float:
    """psi(t): alpha-free Laplace exponent of the weight measure.

    Evaluated by adaptive quadrature split across the w -> 0 singularity;
    w_min > 0 integrates the eps-truncated process instead (used by the
    sampler self-consistency harness).
    """
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ValueError("tilt must be nonnegative")
    if not t.any():
        return 0.0
    a = np.asarray(hp.a)
    b = np.asarray(hp.b)

    def fn(w):
        return -np.expm1(_log_slot_mgf(w, t, a, b, core_slot))

    val = levy_integral(fn, hp.sigma, hp.tau, lo=w_min, rtol=rtol, zero_order=1)
    return val / special.gamma(1.0 - hp.sigma)


@dataclass
class TotalMassDraw:
    masses: np.ndarray
    atom_w0: np.ndarray
    atom_beta: np.ndarray
    gaussian_part: np.ndarray


def _tilted_moments(hp, t: np.ndarray, eps: float, core_slot: bool):
    """Mean vector and covariance of the sub-eps tilted mass remainder."""
    k = t.shape[0]
    a = np.asarray(hp.a)
    b = np.asarray(hp.b)

    def per_slot(w):
        # phi_k: tilted MGF per slot; mu_k, mu2_k: tilted first/second moments.
        w = w[:, None]
        if core_slot:
            gamma_t, gamma_a, gamma_b = t[1:][None, :], a[None, :], b[None, :]
            phi0 = np.exp(np.logaddexp(-w, np.log(-np.expm1(-w)) - t[0] * w))
            mu0 = -np.expm1(-w) * np.exp(-t[0] * w)
            phi = np.concatenate([phi0, (1 + gamma_t * w / gamma_b) ** -gamma_a], axis=1)
            mu = np.concatenate([mu0, gamma_a / gamma_b *
                                 (1 + gamma_t * w / gamma_b) ** (-gamma_a - 1)], axis=1)
            mu2 = np.concatenate([mu0, gamma_a * (gamma_a + 1) / gamma_b**2 *
                                  (1 + gamma_t * w / gamma_b) ** (-gamma_a - 2)], axis=1)
        else:
            gamma_t, gamma_a, gamma_b = t[None, :], a[None, :], b[None, :]
            phi = (1 + gamma_t * w / gamma_b) ** -gamma_a
            mu = gamma_a / gamma_b * (1 + gamma_t * w / gamma_b) ** (-gamma_a - 1)
            mu2 = gamma_a * (gamma_a + 1) / gamma_b**2 * (1 + gamma_t * w / gamma_b) ** (-gamma_a - 2)
        return phi, mu, mu2

    pairs = [(i, j) for i in range(k) for j in range(i, k)]

    def integrands(w):
        phi, mu, mu2 = per_slot(w)
        prod_phi = phi.prod(axis=1, keepdims=True)
        cols = []
        for i in range(k):  # mean integrands: w * mu_i * prod_{l != i} phi_l
            cols.append(w * mu[:, i] * prod_phi[:, 0] / phi[:, i])
        for i, j in pairs:  # covariance integrands
            if i == j:
                cols.append(w**2 * mu2[:, i] * prod_phi[:, 0] / phi[:, i])
            else:
                cols.append(w**2 * mu[:, i] * mu[:, j] * prod_phi[:, 0]
                            / (phi[:, i] * phi[:, j]))
        return np.stack(cols, axis=1)

    orders = []
    bern = 1 if core_slot else 0  # the core slot's tilted moments are O(w)
    for i in range(k):
        orders.append(1 + (bern if i == 0 and core_slot else 0))
    for i, j in pairs:
        extra = sum(1 for s in (i, j) if core_slot and s == 0)
        orders.append(2 + min(extra, 1))
    vals = levy_integral_multi(integrands, hp.sigma, hp.tau, orders,
                               lo=0.0, hi=eps, rtol=1e-5)
    vals = vals * hp.alpha / special.gamma(1.0 - hp.sigma)
    mean = vals[:k]
    cov = np.zeros((k, k))
    for idx, (i, j) in enumerate(pairs):
        cov[i, j] = cov[j, i] = vals[k + idx]
    return mean, cov


def _truncated_gaussian(mean: np.ndarray, cov: np.ndarray,
                        rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mean, cov) restricted to the nonnegative orthant."""
    if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
        raise FloatingPointError("non-finite truncated-Gaussian moments")
    k = mean.shape[0]
    sd = np.sqrt(np.maximum(np.diag(cov), 0.0))
    if (sd == 0.0).all():
        return np.maximum(mean, 0.0)
    jitter = 1e-12 * max(sd.max() ** 2, 1e-300)
    try:
        chol = np.linalg.cholesky(cov + jitter * np.eye(k))
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(str(exc)) from exc
    for _ in range(200):
        x = mean + chol @ rng.standard_normal(k)
        if (x >= 0.0).all():
            return x
    # Acceptance too low: fall back to coordinatewise one-sided sampling.
    lo = np.where(sd > 0, -mean / np.where(sd > 0, sd, 1.0), 0.0)
    x = np.empty(k)
    for i in range(k):
        if sd[i] == 0.0:
            x[i] = max(mean[i], 0.0)
        else:
            x[i] = stats.truncnorm.rvs(lo[i], np.inf, loc=mean[i], scale=sd[i],
                                       random_state=rng)
    return x


def sample_total_masses(hp, tilt, eps_mass: float, rng,
                        core_slot: bool = True,
                        gaussian_remainder: bool = True,
                        return_atoms: bool = False):
    """Draw the unobserved-node mass vector from its tilted approximation.

    Jumps above eps_mass are exact (thinning of the tilted process, using
    that the Bernoulli-slot factor is at most 1); the remainder is a
    moment-matched nonnegative-truncated Gaussian unless disabled.
    """
    tilt = np.asarray(tilt, dtype=float)
    if (tilt < 0).any():
        raise ValueError("tilt must be nonnegative")
    if eps_mass <= 0:
        raise ValueError("eps_mass must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    a = np.asarray(hp.a)
    b = np.asarray(hp.b)
    k = tilt.shape[0]

    def extra_accept(w):
        return np.exp(_log_slot_mgf(w, tilt, a, b, core_slot))

    w_atoms = thinned_ggp_points(hp.alpha, hp.sigma, hp.tau, eps_mass, rng,
                                 extra_accept=extra_accept)
    n_atom = w_atoms.shape[0]
    beta = np.zeros((n_atom, k))
    col = 0
    if core_slot:
        logit = np.log(-np.expm1(-w_atoms)) - tilt[0] * w_atoms + w_atoms
        beta[:, 0] = rng.random(n_atom) < special.expit(logit)
        col = 1
    for kk in range(col, k):
        ak, bk = a[kk - col], b[kk - col]
        beta[:, kk] = rng.gamma(ak, 1.0 / (bk + tilt[kk] * w_atoms))
    atomic = (w_atoms[:, None] * beta).sum(axis=0) if n_atom else np.zeros(k)

    gauss = np.zeros(k)
    if gaussian_remainder:
        mean, cov = _tilted_moments(hp, tilt, eps_mass, core_slot)
        gauss = _truncated_gaussian(mean, cov, rng)
    masses = atomic + gauss
    if return_atoms:
        return TotalMassDraw(masses=masses, atom_w0=w_atoms, atom_beta=beta,
                             gaussian_part=gauss)
    return masses


def _log_gamma_pdf(x, shape, rate):
    return shape * np.log(rate) - special.gammaln(shape) \
        + (shape - 1.0) * np.log(x) - rate * x


def _log_levy_density(w0: np.ndarray, sigma: float, tau: float) -> float:
    return float(-(1.0 + sigma) * np.log(w0).sum() - tau * w0.sum()
                 - w0.shape[0] * special.gammaln(1.0 - sigma))


def _log_phi_prior(hp, priors) -> float:
    """Log prior of phi in walk coordinates (gamma priors + log Jacobians)."""
    terms = 0.0
    sh, rt = priors["one_minus_sigma"]
    terms += _log_gamma_pdf(1.0 - hp.sigma, sh, rt) + math.log(1.0 - hp.sigma)
    sh, rt = priors["tau"]
    terms += _log_gamma_pdf(hp.tau, sh, rt) + math.log(hp.tau)
    sh, rt = priors["a"]
    for x in hp.a:
        terms += _log_gamma_pdf(x, sh, rt) + math.log(x)
    sh, rt = priors["b"]
    for x in hp.b:
        terms += _log_gamma_pdf(x, sh, rt) + math.log(x)
    return float(terms)


def propose_phi(hp, scale: float, rng: np.random.Generator):
    """Random walk in unconstrained coordinates: -log(1-sigma), log tau,
    log a_k, log b_k; symmetric, so no proposal correction is needed."""
    s = -math.log(1.0 - hp.sigma)
    s_new = s + scale * rng.standard_normal()
    sigma_new = 1.0 - math.exp(-s_new)
    tau_new = hp.tau * math.exp(scale * rng.standard_normal())
    a_new = tuple(x * math.exp(scale * rng.standard_normal()) for x in hp.a)
    b_new = tuple(x * math.exp(scale * rng.standard_normal()) for x in hp.b)
    return hp.replace(sigma=sigma_new, tau=tau_new, a=a_new, b=b_new)


def mh_update_hyperparams(state, cfg, rng, scale: float | None = None,
                          return_atoms: bool = False):
    """Joint MH update of (phi, alpha, total masses); mutates state.

    Proposes phi by a symmetric walk in unconstrained coordinates, alpha
    from Gamma(a_prior + N, b_prior + psi(lam; phi_new)) and the masses from
    the tilted law under the proposal.  Returns (accepted, atoms-or-None).
    A quadrature failure inside psi auto-rejects the proposal.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    hp = state.hp
    n = state.w0.shape[0]
    priors = cfg.resolved_priors()
    scale = cfg.phi_walk_scale if scale is None else scale
    a_alpha, b_alpha = priors["alpha"]
    core_slot = state.core_slot

    hp_new = propose_phi(hp, scale, rng)
    s_vec = (state.beta * state.w0[:, None]).sum(axis=0)
    lam = state.w_star + 2.0 * s_vec
    try:
        psi_new = laplace_exponent(lam, hp_new, core_slot=core_slot,
                                   w_min=cfg.mass_w_min)
        alpha_new = rng.gamma(a_alpha + n, 1.0 / (b_alpha + psi_new))
        hp_new = hp_new.replace(alpha=alpha_new)
        eps_mass = cfg.resolved_eps_mass(hp_new)
        draw = sample_total_masses(hp_new, lam, eps_mass, rng,
                                   core_slot=core_slot,
                                   gaussian_remainder=cfg.mass_gaussian_remainder,
                                   return_atoms=True)
        w_star_new = draw.masses
        lam_rev = w_star_new + 2.0 * s_vec
        psi_rev = laplace_exponent(lam_rev, hp, core_slot=core_slot,
                                   w_min=cfg.mass_w_min)
    except (QuadratureError, SimulationBudgetError, OverflowError,
            FloatingPointError):
        # Un-evaluable proposals sit so deep in the prior tail that their
        # true acceptance probability is below float resolution; reject.
        return False, None

    log_r = _log_levy_density(state.w0, hp_new.sigma, hp_new.tau) \
        - _log_levy_density(state.w0, hp.sigma, hp.tau)
    gamma_scores = state.beta[:, 1:] if core_slot else state.beta
    for kk in range(gamma_scores.shape[1]):
        log_r += float(_log_gamma_pdf(gamma_scores[:, kk], hp_new.a[kk], hp_new.b[kk]).sum()
                       - _log_gamma_pdf(gamma_scores[:, kk], hp.a[kk], hp.b[kk]).sum())
    log_r += float(np.dot(state.w_star, state.w_star) - np.dot(w_star_new, w_star_new))
    log_r += (a_alpha + n) * (math.log(b_alpha + psi_rev) - math.log(b_alpha + psi_new))
    log_r += _log_phi_prior(hp_new, priors) - _log_phi_prior(hp, priors)

    if math.log(rng.random()) < log_r:
        state.hp = hp_new
        state.w_star = w_star_new
        return True, (draw if return_atoms else None)
    return False, None
