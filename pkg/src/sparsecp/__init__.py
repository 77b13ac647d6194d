"""Sparse random graphs with core-periphery structure.

Simulation from a generalized-gamma-process graph model, MCMC posterior
inference, empirical sparsity checks, goodness-of-fit diagnostics and
baseline core detectors.
"""

from .model import (
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
from .simulate import (
    GenerationFailure,
    GgpDraw,
    HolmeConfig,
    default_truncation,
    parameter_sweep,
    sample_ggp_weights,
    sample_graph,
    sample_holme_graph,
    sample_scores,
    simulate_graph,
)
from .baselines import (
    DetectionResult,
    detect_borgatti_everett,
    detect_degree_threshold,
    detect_sbm_two_block,
)
from .diagnostics import (
    DegreeCdfPair,
    FitReport,
    SlopeReport,
    asymptotic_slopes,
    autocorrelation,
    core_score_from_samples,
    credible_intervals,
    gelman_rubin,
    ks_statistics,
    make_cdf_pair,
    posterior_predictive_degrees,
    roc_auc,
)

__version__ = "0.1.0"

__all__ = [
    "Graph", "Hyperparams", "NodeParams", "NodeParamArray", "Partition",
    "SubgraphCounts", "connection_probability", "partition_core_periphery",
    "subgraph_counts", "GenerationFailure", "GgpDraw", "HolmeConfig",
    "default_truncation", "parameter_sweep", "sample_ggp_weights",
    "sample_graph", "sample_holme_graph", "sample_scores", "simulate_graph",
    "DetectionResult", "detect_borgatti_everett", "detect_degree_threshold",
    "detect_sbm_two_block", "DegreeCdfPair", "FitReport", "SlopeReport",
    "asymptotic_slopes", "autocorrelation", "core_score_from_samples",
    "credible_intervals", "gelman_rubin", "ks_statistics", "make_cdf_pair",
    "posterior_predictive_degrees", "roc_auc",
]
