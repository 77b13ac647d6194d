"""Command-line interface.

Subcommands: simulate, fit, predict, asymptotics, compare.  Every command
is a pure function of its input files, JSON config and seed; outputs are
schema-tagged CSVs, JSONL chain files and a JSON report.  Exit codes:
0 success, 2 config error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import io as cpio
from .baselines import detect_borgatti_everett, detect_degree_threshold, detect_sbm_two_block
from .diagnostics import (
    asymptotic_slopes,
    core_score_from_samples,
    gelman_rubin,
    ks_statistics,
    make_cdf_pair,
    posterior_predictive_degrees,
    roc_auc,
)
from .mcmc import NumericalOverflow, SamplerConfig, run_chain, run_chains
from .model import Graph, Hyperparams, partition_core_periphery, subgraph_counts
from .quadrature import QuadratureError
from .simulate import (
    GenerationFailure,
    HolmeConfig,
    default_truncation,
    parameter_sweep,
    sample_holme_graph,
    simulate_graph,
)


class ConfigError(ValueError):
    pass


SIMULATE_DEFAULTS = {
    "k": 2, "alpha": 200.0, "sigma": 0.2, "tau": 1.0, "a": [0.2], "b": [0.5],
    "eps": None, "seed": 0, "strip_self_loops": False,
}
FIT_DEFAULTS = {
    "n_iters": 100_000, "n_burnin": 75_000, "thin": 50, "n_chains": 3,
    "k": 2, "init_iters": 10_000, "p_lat": 0.5, "hmc_leapfrog_steps": 10,
    "prior_shape": 0.01, "prior_rate": 0.01, "eps_mass": None,
    "node_stride": 1, "seed": 0, "jobs": 1, "checkpoint_every": 10_000,
}
PREDICT_DEFAULTS = {"n_graphs": 5000, "seed": 0, "eps": None}
ASYMPTOTICS_DEFAULTS = {
    "sigmas": [0.2, 0.5, 0.8, -0.5], "tau": 1.0, "a": [0.2], "b": [0.5],
    "alpha_min": 40.0, "alpha_max": 400.0, "n_alpha": 5,
    "replicates": 10, "eps": None, "seed": 0,
}
COMPARE_DEFAULTS = {
    "generator": "in-model",
    "b_grid": [0.2, 0.5, 1.0, 2.0, 5.0],
    "kappa_grid": [0.01, 0.1, 1.0, 10.0, 100.0],
    "alpha": 200.0, "sigma": 0.2, "tau": 1.0, "a": 0.2,
    "holme_nodes": 800, "holme_m_min": 10.0,
    "replicates": 20, "seed": 0,
    "methods": ["sparsecp", "borgatti-everett", "sbm", "degree"],
    "external_scores": {},
    "fit": {"n_iters": 6000, "n_burnin": 3000, "thin": 30, "n_chains": 1,
            "init_iters": 1500, "eps_mass": 1e-3},
    "jobs": 1,
}

METHOD_NAMES = ("sparsecp", "borgatti-everett", "sbm", "degree")


def _load_config(path: str | None, defaults: dict) -> dict:
    cfg = json.loads(json.dumps(defaults))  # deep copy
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in user.items():
            if isinstance(cfg.get(key), dict) and isinstance(value, dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    return cfg


def _hyperparams(cfg: dict) -> Hyperparams:
    k = int(cfg["k"])
    a = cfg["a"] if isinstance(cfg["a"], list) else [cfg["a"]] * (k - 1)
    b = cfg["b"] if isinstance(cfg["b"], list) else [cfg["b"]] * (k - 1)
    if len(a) != k - 1 or len(b) != k - 1:
        raise ConfigError(f"a and b must have length k-1 = {k - 1}")
    try:
        return Hyperparams(alpha=float(cfg["alpha"]), sigma=float(cfg["sigma"]),
                           tau=float(cfg["tau"]), a=tuple(a), b=tuple(b))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _degree_table(graph: Graph) -> pd.DataFrame:
    deg = graph.degrees
    values, counts = np.unique(deg, return_counts=True)
    return pd.DataFrame({
        "degree": values, "count": counts,
        "frequency": counts / max(graph.n_nodes, 1),
    })


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, SIMULATE_DEFAULTS)
    hp = _hyperparams(cfg)
    out = Path(args.out_dir)
    rng = np.random.default_rng(int(cfg["seed"]))
    eps = cfg["eps"] if cfg["eps"] is not None else default_truncation(hp)
    graph, params, draw = simulate_graph(hp, rng, eps=eps)
    cpio.save_edge_list(graph, out / "edges.csv",
                        strip_self_loops=bool(cfg["strip_self_loops"]))
    node_df = pd.DataFrame({"node_id": np.arange(graph.n_nodes), "w0": params.w0})
    for kk in range(params.k):
        node_df[f"beta{kk + 1}"] = params.beta[:, kk]
        node_df[f"w{kk + 1}"] = params.w[:, kk]
    cpio.save_table(node_df, out / "nodeparams.csv", "nodeparams")
    part = partition_core_periphery(params, graph)
    counts = subgraph_counts(graph, part)
    row = {"alpha": hp.alpha, "sigma": hp.sigma, "tau": hp.tau, "eps": eps,
           "seed": cfg["seed"], **counts.as_dict()}
    cpio.save_table(pd.DataFrame([row]), out / "counts.csv", "counts")
    cpio.save_table(_degree_table(graph), out / "degrees.csv", "degrees")
    print(f"simulated graph: {graph.n_nodes} nodes, {graph.n_edges} edges, "
          f"{counts.n_core} core")
    return 0


def _sampler_config(cfg: dict) -> SamplerConfig:
    keys = ("n_iters", "n_burnin", "thin", "n_chains", "k", "init_iters",
            "p_lat", "hmc_leapfrog_steps", "prior_shape", "prior_rate",
            "eps_mass", "node_stride", "seed", "checkpoint_every")
    try:
        return SamplerConfig(**{key: cfg[key] for key in keys if key in cfg})
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _fit_worker(task):
    graph, cfg, seed, ckpt_path, resume = task
    ckpt = Path(ckpt_path)
    payload = None
    rng = np.random.default_rng(seed)
    if resume and ckpt.exists():
        payload, rng = cpio.load_checkpoint(ckpt)

    def checkpoint_cb(pl, _rng=rng, _path=ckpt):
        cpio.save_checkpoint(pl, _rng, _path)

    return run_chain(graph, cfg, rng, checkpoint_callback=checkpoint_cb,
                     resume=payload)


def fit_graph(graph: Graph, cfg: SamplerConfig, jobs: int = 1,
              out_dir: Path | None = None, resume: bool = False):
    """Run the configured chains, optionally checkpointing into out_dir."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    if out_dir is None:
        return run_chains(graph, cfg, jobs=jobs)
    tasks = [(graph, cfg, seeds[c], str(out_dir / f"chain_{c}.ckpt"), resume)
             for c in range(cfg.n_chains)]
    if jobs <= 1 or cfg.n_chains == 1:
        return [_fit_worker(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=min(jobs, cfg.n_chains)) as pool:
        return list(pool.map(_fit_worker, tasks))


def cmd_fit(args) -> int:
    cfg = _load_config(args.config, FIT_DEFAULTS)
    graph = cpio.load_edge_list(args.graph)
    sampler_cfg = _sampler_config(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chains = fit_graph(graph, sampler_cfg, jobs=int(cfg["jobs"]),
                       out_dir=out, resume=args.resume)
    traces = []
    for c, samples in enumerate(chains):
        cpio.save_chain(samples, out / f"chain_{c}.jsonl",
                        node_stride=sampler_cfg.node_stride)
        ident = samples.identifiable()
        ident.insert(0, "chain", c)
        ident.insert(1, "iter", samples.iters)
        ident["logpost"] = samples.log_posterior
        traces.append(ident)
    trace_df = pd.concat(traces, ignore_index=True)
    cpio.save_table(trace_df, out / "traces.csv", "traces")

    report = {"n_chains": len(chains), "n_nodes": graph.n_nodes,
              "n_edges": graph.n_edges,
              "acceptance": {f"chain_{c}": s.acceptance
                             for c, s in enumerate(chains)}}
    if len(chains) >= 2 and all(len(c) >= 10 for c in chains):
        length = min(len(c) for c in chains)
        rhat = {}
        for col in ("logpost", "sigma", "log_alpha_tilde"):
            series = [trace_df[trace_df.chain == c][col].to_numpy()[:length]
                      for c in range(len(chains))]
            rhat[col] = gelman_rubin(series)
        report["gelman_rubin"] = rhat
        report["converged"] = bool(max(rhat.values()) < 1.1)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"fit complete: {len(chains)} chains, "
          f"{sum(len(c) for c in chains)} retained samples")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_config(args.config, PREDICT_DEFAULTS)
    graph = cpio.load_edge_list(args.graph)
    chain_paths = sorted(Path(args.chains).glob("chain_*.jsonl")) \
        if Path(args.chains).is_dir() else [Path(args.chains)]
    if not chain_paths:
        raise cpio.DataError(f"no chain files under {args.chains}")
    samples = cpio.merge_samples([cpio.load_chain(p) for p in chain_paths])
    out = Path(args.out_dir)
    rng = np.random.default_rng(int(cfg["seed"]))
    pred = posterior_predictive_degrees(samples, int(cfg["n_graphs"]), rng,
                                        eps=cfg["eps"])
    obs_deg = graph.degrees
    obs_hist, _ = np.histogram(obs_deg, bins=pred.bin_edges)
    bands = pd.DataFrame({
        "bin_lo": pred.bin_edges[:-1], "bin_hi": pred.bin_edges[1:],
        "band_low": pred.band_low, "band_high": pred.band_high,
        "observed_frequency": obs_hist / max(graph.n_nodes, 1),
    })
    cpio.save_table(bands, out / "bands.csv", "bands")
    cpio.save_table(_degree_table(graph), out / "degrees.csv", "degrees")

    rows = []
    for deg in pred.degree_sequences:
        if len(deg) == 0:
            continue
        rows.append(ks_statistics(make_cdf_pair(obs_deg, deg)).as_dict())
    stats_df = pd.DataFrame(rows)
    summary = pd.DataFrame({
        "statistic": stats_df.columns,
        "mean": stats_df.mean().to_numpy(),
        "sd": stats_df.std(ddof=1).to_numpy(),
    })
    cpio.save_table(summary, out / "fitreport.csv", "fitreport")
    print(summary.to_string(index=False))
    return 0


def cmd_asymptotics(args) -> int:
    cfg = _load_config(args.config, ASYMPTOTICS_DEFAULTS)
    out = Path(args.out_dir)
    if int(cfg["n_alpha"]) < 4:
        raise ConfigError("need at least 4 alpha grid points")
    alphas = np.geomspace(float(cfg["alpha_min"]), float(cfg["alpha_max"]),
                          int(cfg["n_alpha"]))
    tables = []
    slope_rows = []
    seq = np.random.SeedSequence(int(cfg["seed"])).spawn(len(cfg["sigmas"]))
    for si, sigma in enumerate(cfg["sigmas"]):
        grid = [Hyperparams(alpha=float(a), sigma=float(sigma),
                            tau=float(cfg["tau"]), a=tuple(cfg["a"]),
                            b=tuple(cfg["b"])) for a in alphas]
        table = parameter_sweep(grid, int(cfg["replicates"]),
                                int(np.random.default_rng(seq[si]).integers(2**31)),
                                eps=cfg["eps"])
        tables.append(table)
        for region in ("overall", "cc", "pp", "cp", "core-fraction"):
            rep = asymptotic_slopes(table, region)
            slope_rows.append({
                "sigma": sigma, "region": region,
                "fitted": rep.fitted_exponent, "theory": rep.theory_exponent,
                "stderr": rep.stderr, "n_points": rep.n_points,
            })
    cpio.save_table(pd.concat(tables, ignore_index=True), out / "sweep.csv", "sweep")
    slopes = pd.DataFrame(slope_rows)
    cpio.save_table(slopes, out / "slopes.csv", "slopes")
    print(slopes.to_string(index=False))
    return 0


def _our_method_scores(graph: Graph, fit_cfg: dict, seed) -> np.ndarray:
    cfg = dict(FIT_DEFAULTS)
    cfg.update(fit_cfg)
    cfg["seed"] = seed
    sampler_cfg = _sampler_config(cfg)
    chains = run_chains(graph, sampler_cfg, jobs=1)
    return core_score_from_samples(cpio.merge_samples(chains))


def _compare_single(task):
    """One (generator draw, all methods) comparison cell."""
    cfg, param_value, replicate, seed = task
    rng = np.random.default_rng(seed)
    if cfg["generator"] == "in-model":
        hp = Hyperparams(alpha=float(cfg["alpha"]), sigma=float(cfg["sigma"]),
                         tau=float(cfg["tau"]), a=(float(cfg["a"]),),
                         b=(float(param_value),))
        graph, kept_params, _ = simulate_graph(hp, rng)
        truth = kept_params.beta[:, 0] > 0
        param_name = "b"
    elif cfg["generator"] == "holme":
        hcfg = HolmeConfig(n_nodes=int(cfg["holme_nodes"]),
                           kappa=float(param_value),
                           m_min=float(cfg["holme_m_min"]),
                           seed=int(rng.integers(2**31)))
        full, labels = sample_holme_graph(hcfg)
        keep = np.flatnonzero(full.degrees >= 1)
        relabel = -np.ones(full.n_nodes, dtype=np.int64)
        relabel[keep] = np.arange(keep.size)
        edges = [(relabel[i], relabel[j]) for i, j in full.edges]
        graph = Graph.from_edges(keep.size, edges)
        truth = labels[keep]
        param_name = "kappa"
    else:
        raise ConfigError(f"unknown generator {cfg['generator']!r}")
    if truth.all() or not truth.any():
        return []

    rows = []
    for method in cfg["methods"]:
        if method == "sparsecp":
            scores = _our_method_scores(graph, cfg["fit"], rng.integers(2**31))
        elif method == "borgatti-everett":
            scores = detect_borgatti_everett(graph, restarts=5,
                                             rng=rng.integers(2**31)).scores
        elif method == "sbm":
            scores = detect_sbm_two_block(graph, rng=rng.integers(2**31)).scores
        elif method == "degree":
            scores = detect_degree_threshold(graph).scores
        elif method in cfg["external_scores"]:
            scores = cpio.load_external_scores(cfg["external_scores"][method],
                                               graph.n_nodes)
        else:
            raise ConfigError(
                f"unknown method {method!r}; available: {METHOD_NAMES} "
                f"plus keys of external_scores")
        rows.append({"generator": cfg["generator"], "param": param_name,
                     "value": param_value, "replicate": replicate,
                     "method": method, "auc": roc_auc(scores, truth),
                     "n_nodes": graph.n_nodes})
    return rows


def cmd_compare(args) -> int:
    cfg = _load_config(args.config, COMPARE_DEFAULTS)
    for method in cfg["methods"]:
        if method not in METHOD_NAMES and method not in cfg["external_scores"]:
            raise ConfigError(
                f"unknown method {method!r}; available: {METHOD_NAMES} "
                f"plus keys of external_scores")
    out = Path(args.out_dir)
    grid = cfg["b_grid"] if cfg["generator"] == "in-model" else cfg["kappa_grid"]
    reps = int(cfg["replicates"])
    seeds = np.random.SeedSequence(int(cfg["seed"])).spawn(len(grid) * reps)
    tasks = [(cfg, grid[g], r, seeds[g * reps + r])
             for g in range(len(grid)) for r in range(reps)]
    jobs = int(cfg["jobs"])
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_compare_single, tasks))
    else:
        chunks = [_compare_single(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    table = pd.DataFrame(rows)
    cpio.save_table(table, out / "auc.csv", "auc")
    print(table.groupby(["value", "method"]).auc.mean().unstack().to_string())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsecp",
        description="Sparse core-periphery graphs: simulate, fit, verify.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, defaults, help_text, needs_graph=False, needs_chains=False):
        p = sub.add_parser(
            name, help=help_text,
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="config defaults:\n" + json.dumps(defaults, indent=2))
        p.add_argument("--config", default=None,
                       help="JSON config; defaults shown below")
        p.add_argument("--out-dir", required=True)
        if needs_graph:
            p.add_argument("--graph", required=True, help="edge-list CSV")
        if needs_chains:
            p.add_argument("--chains", required=True,
                           help="chain file or directory of chain_*.jsonl")
        if name == "fit":
            p.add_argument("--resume", action="store_true",
                           help="resume from checkpoints in out-dir")
        p.set_defaults(func=func)
        return p

    add("simulate", cmd_simulate, SIMULATE_DEFAULTS,
        "draw a graph from the model")
    add("fit", cmd_fit, FIT_DEFAULTS, "MCMC posterior inference",
        needs_graph=True)
    add("predict", cmd_predict, PREDICT_DEFAULTS,
        "posterior predictive degree checks", needs_graph=True, needs_chains=True)
    add("asymptotics", cmd_asymptotics, ASYMPTOTICS_DEFAULTS,
        "empirical sparsity-slope verification")
    add("compare", cmd_compare, COMPARE_DEFAULTS,
        "benchmark core detection methods")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (cpio.DataError, GenerationFailure) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (QuadratureError, NumericalOverflow, FloatingPointError,
            OverflowError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
