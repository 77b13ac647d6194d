"""Convergence diagnostics, predictive checks, fit distances and scoring.

Covers the potential-scale-reduction statistic, autocorrelation, posterior
predictive degree distributions with percentile bands, plain/reweighted
Kolmogorov-Smirnov and tail-weighted Renyi distances between the observed
and predictive degree CDFs, ROC AUC for core classification, per-node
credible intervals, and log-log slope fits against the sparsity theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .model import Hyperparams
from .simulate import simulate_graph

__all__ = [
    "DegreeCdfPair",
    "FitReport",
    "SlopeReport",
    "PredictiveDegrees",
    "gelman_rubin",
    "autocorrelation",
    "posterior_predictive_degrees",
    "make_cdf_pair",
    "ks_statistics",
    "roc_auc",
    "core_score_from_samples",
    "asymptotic_slopes",
    "credible_intervals",
]

SLOPE_REGIONS = ("overall", "cc", "pp", "cp", "core-fraction")


@dataclass(frozen=True)
class DegreeCdfPair:
    """Observed and predictive degree CDFs tabulated on a shared support."""

    support: np.ndarray       # increasing integer degrees
    observed_cdf: np.ndarray  # S(x)
    predictive_cdf: np.ndarray  # P(x)

    def __post_init__(self):
        for cdf in (self.observed_cdf, self.predictive_cdf):
            if cdf.shape != self.support.shape:
                raise ValueError("CDF shape mismatch")
            if (np.diff(cdf) < -1e-12).any() or abs(cdf[-1] - 1.0) > 1e-9:
                raise ValueError("CDFs must be nondecreasing and end at 1")

    @property
    def x_min(self) -> int:
        return int(self.support[0])


@dataclass(frozen=True)
class FitReport:
    """Degree-distribution distances, aggregated over predictive draws."""

    ks_unweighted: float
    ks_reweighted: float
    renyi_lower: float
    renyi_upper: float

    def __post_init__(self):
        for v in (self.ks_unweighted, self.ks_reweighted,
                  self.renyi_lower, self.renyi_upper):
            if v < 0:
                raise ValueError("distances must be nonnegative")

    def as_dict(self) -> dict:
        return {"K": self.ks_unweighted, "D": self.ks_reweighted,
                "L2": self.renyi_lower, "U2": self.renyi_upper}


@dataclass(frozen=True)
class SlopeReport:
    region: str
    fitted_exponent: float
    theory_exponent: float
    stderr: float
    n_points: int

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")


@dataclass(frozen=True)
class PredictiveDegrees:
    """Predictive degree-frequency ensemble over logarithmic bins."""

    bin_edges: np.ndarray        # (B+1,) degree bin edges
    frequencies: np.ndarray      # (n_graphs, B) per-graph binned frequencies
    band_low: np.ndarray         # (B,) 2.5th percentile
    band_high: np.ndarray        # (B,) 97.5th percentile
    degree_sequences: tuple      # raw degree arrays per replicate


def gelman_rubin(chains) -> float:
    """Potential scale reduction from two or more equal-length series."""
    arr = np.asarray(chains, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need at least two chains of equal length")
    n_chain, length = arr.shape
    if length < 10:
        raise ValueError("chains too short")
    within = arr.var(axis=1, ddof=1).mean()
    means = arr.mean(axis=1)
    between = length * means.var(ddof=1)
    var_hat = (length - 1) / length * within + between / length
    return float(math.sqrt(var_hat / within))


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Normalised autocovariance for lags 0..max_lag (lag 0 = 1)."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size <= max_lag:
        raise ValueError("series must be longer than max_lag")
    x = x - x.mean()
    var = np.dot(x, x)
    if var == 0.0:
        raise ValueError("series has zero variance")
    n = x.size
    full = np.correlate(x, x, mode="full")[n - 1: n + max_lag]
    return full / var


def make_cdf_pair(observed_degrees, predictive_degrees) -> DegreeCdfPair:
    """Tabulate both samples on the union support starting at its minimum."""
    obs = np.asarray(observed_degrees)
    pred = np.asarray(predictive_degrees)
    if obs.size == 0 or pred.size == 0:
        raise ValueError("degree samples must be nonempty")
    lo = int(min(obs.min(), pred.min()))
    hi = int(max(obs.max(), pred.max()))
    support = np.arange(lo, hi + 1)
    s = np.cumsum(np.bincount(obs - lo, minlength=support.size)) / obs.size
    p = np.cumsum(np.bincount(pred - lo, minlength=support.size)) / pred.size
    return DegreeCdfPair(support=support, observed_cdf=s, predictive_cdf=p)


def ks_statistics(pair: DegreeCdfPair) -> FitReport:
    """Plain KS, variance-reweighted KS and the two tail-weighted sups.

    The reweighted statistic divides |S-P| by sqrt(P(1-P)) over the support
    from x_min up, skipping endpoints where P is 0 or 1; the lower/upper
    Renyi variants divide by P on {P <= 1/2} and by 1-P on {P >= 1/2}.
    """
    s = pair.observed_cdf
    p = pair.predictive_cdf
    if s.size == 0:
        raise ValueError("empty support")
    diff = np.abs(s - p)
    ks = float(diff.max())
    interior = (p > 0.0) & (p < 1.0)
    d = float((diff[interior] / np.sqrt(p[interior] * (1 - p[interior]))).max()) \
        if interior.any() else 0.0
    lower = (p > 0.0) & (p <= 0.5)
    l2 = float((diff[lower] / p[lower]).max()) if lower.any() else 0.0
    upper = (p >= 0.5) & (p < 1.0)
    u2 = float((diff[upper] / (1 - p[upper])).max()) if upper.any() else 0.0
    return FitReport(ks_unweighted=ks, ks_reweighted=d,
                     renyi_lower=l2, renyi_upper=u2)


def roc_auc(scores, labels) -> float:
    """P(random positive outranks random negative), ties counted half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    from scipy.stats import rankdata
    ranks = rankdata(scores)
    auc = (ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(auc)


def core_score_from_samples(samples) -> np.ndarray:
    """Posterior probability of the core flag per node (threshold 0.5)."""
    if len(samples) == 0:
        raise ValueError("no retained samples")
    flags = samples.core_flag_matrix()
    return flags.mean(axis=0)


def posterior_predictive_degrees(samples, n_graphs: int, rng,
                                 eps: float | None = None,
                                 bins_per_decade: int = 10) -> PredictiveDegrees:
    """Fresh forward simulations at retained hyperparameter draws.

    Each replicate picks a retained sample uniformly, simulates a whole new
    graph at those hyperparameters and records its degree distribution.
    Bands are pointwise 2.5/97.5 percentiles of the log-binned frequencies.
    """
    if len(samples) == 0:
        raise ValueError("no retained samples")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    sequences = []
    max_deg = 1
    for _ in range(n_graphs):
        hp = samples.hp_records[rng.integers(len(samples))]
        graph, _, _ = simulate_graph(hp, rng, eps=eps)
        deg = graph.degrees if graph.n_nodes else np.array([], dtype=np.int64)
        sequences.append(deg)
        if deg.size:
            max_deg = max(max_deg, int(deg.max()))
    n_bins = max(1, int(math.ceil(math.log10(max_deg + 1) * bins_per_decade)))
    edges = np.unique(np.ceil(np.logspace(0, math.log10(max_deg + 1), n_bins + 1)))
    freqs = np.zeros((n_graphs, edges.size - 1))
    for r, deg in enumerate(sequences):
        if deg.size:
            hist, _ = np.histogram(deg, bins=edges)
            freqs[r] = hist / deg.size
    if n_graphs:
        low = np.percentile(freqs, 2.5, axis=0)
        high = np.percentile(freqs, 97.5, axis=0)
    else:
        low = np.zeros(edges.size - 1)
        high = np.zeros(edges.size - 1)
    return PredictiveDegrees(bin_edges=edges, frequencies=freqs,
                             band_low=low, band_high=high,
                             degree_sequences=tuple(sequences))


def credible_intervals(samples, statistic: str = "mean_sociability",
                       level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Per-node equal-tailed intervals of a weight statistic.

    statistic: "mean_sociability" for the K-slot average of w_ik, or
    "core_weight" for w_i1.  Percentiles interpolate linearly between order
    statistics.
    """
    if len(samples) == 0:
        raise ValueError("no retained samples")
    snaps = samples.node_snapshots
    w0 = snaps[:, :, 0]
    beta = snaps[:, :, 1:]
    if statistic == "mean_sociability":
        series = (beta * w0[:, :, None]).mean(axis=2)
    elif statistic == "core_weight":
        series = beta[:, :, 0] * w0
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    half = 100.0 * (1.0 - level) / 2.0
    lo = np.percentile(series, half, axis=0)
    hi = np.percentile(series, 100.0 - half, axis=0)
    return lo, hi


def theory_exponent(region: str, sigma: float) -> float:
    """Edge-vs-node growth exponents implied by the sparsity theory."""
    if region not in SLOPE_REGIONS:
        raise ValueError(f"unknown region {region!r}")
    if region == "core-fraction":
        return -sigma if 0 < sigma < 1 else 0.0
    if sigma <= 0:
        return 2.0
    if region == "cc":
        return 2.0
    if region == "cp":
        return 2.0 / (1.0 + sigma / 2.0)
    return 2.0 / (1.0 + sigma)


def asymptotic_slopes(table: pd.DataFrame, region: str) -> SlopeReport:
    """OLS slope of log edge count against log node count for one region.

    For "cp" the node measure is sqrt(n_core * n_periph); "core-fraction"
    regresses log(n_core/n_nodes) on log(alpha).  The table must hold at
    least 4 distinct alpha values.
    """
    if region not in SLOPE_REGIONS:
        raise ValueError(f"unknown region {region!r}")
    sigmas = table["sigma"].unique()
    if len(sigmas) != 1:
        raise ValueError("slope fits need a single-sigma table")
    if table["alpha"].nunique() < 4:
        raise ValueError("need at least 4 distinct alpha grid points")
    if region == "overall":
        x, y = table["n_nodes"], table["e_total"]
    elif region == "cc":
        x, y = table["n_core"], table["e_cc"]
    elif region == "pp":
        x, y = table["n_periph"], table["e_pp"]
    elif region == "cp":
        x = np.sqrt(table["n_core"] * table["n_periph"])
        y = table["e_cp"]
    else:
        x = table["alpha"]
        y = table["n_core"] / table["n_nodes"]
    keep = (np.asarray(x, dtype=float) > 0) & (np.asarray(y, dtype=float) > 0)
    lx = np.log(np.asarray(x, dtype=float)[keep])
    ly = np.log(np.asarray(y, dtype=float)[keep])
    if lx.size < 4 or np.ptp(lx) == 0:
        raise ValueError("degenerate regression")
    design = np.column_stack([np.ones_like(lx), lx])
    coef, residuals, *_ = np.linalg.lstsq(design, ly, rcond=None)
    dof = lx.size - 2
    if dof > 0 and residuals.size:
        s2 = residuals[0] / dof
        sxx = np.sum((lx - lx.mean()) ** 2)
        stderr = math.sqrt(s2 / sxx)
    else:
        stderr = 0.0
    return SlopeReport(region=region, fitted_exponent=float(coef[1]),
                       theory_exponent=theory_exponent(region, float(sigmas[0])),
                       stderr=stderr, n_points=int(lx.size))
