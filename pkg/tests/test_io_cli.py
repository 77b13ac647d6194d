"""File formats, round trips, checkpoint resume and the CLI surface."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from sparsecp import (
    Graph,
    Hyperparams,
    simulate_graph,
)
from sparsecp.cli import main
from sparsecp.io import (
    DataError,
    load_chain,
    load_edge_list,
    load_external_scores,
    merge_samples,
    save_chain,
    save_edge_list,
)
from sparsecp.mcmc import SamplerConfig, run_chain


class TestEdgeList:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 30))
            pairs = rng.integers(0, n, size=(int(rng.integers(1, 40)), 2))
            graph = Graph.from_edge_array(n, pairs)
            path = tmp_path / "edges.csv"
            save_edge_list(graph, path)
            back = load_edge_list(path)
            assert back.edges == graph.edges
            assert back.n_nodes == graph.n_nodes

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("source,target\n")
        with pytest.raises(DataError):
            load_edge_list(path)

    def test_duplicate_warns(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("source,target\n0,1\n1,0\n0,1\n")
        with pytest.warns(UserWarning, match="2 duplicate"):
            graph = load_edge_list(path)
        assert graph.edges == ((0, 1),)

    def test_bad_entry_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("source,target\n0,1\nfoo,2\n")
        with pytest.raises(DataError, match="line"):
            load_edge_list(path)

    def test_strip_self_loops(self, tmp_path):
        graph = Graph.from_edges(3, [(0, 0), (0, 1)])
        path = tmp_path / "edges.csv"
        save_edge_list(graph, path, strip_self_loops=True)
        df = pd.read_csv(path, comment="#")
        assert len(df) == 1


def _short_cfg(**kw):
    base = dict(n_iters=60, n_burnin=20, thin=5, n_chains=1, init_iters=10,
                seed=3, k=2, eps_mass=1e-3, checkpoint_every=20)
    base.update(kw)
    return SamplerConfig(**base)


@pytest.fixture(scope="module")
def small_graph():
    hp = Hyperparams(alpha=30.0, sigma=0.2, tau=1.0, a=(0.2,), b=(0.5,))
    graph, _, _ = simulate_graph(hp, np.random.default_rng(5))
    return graph


class TestChainFiles:
    def test_chain_round_trip(self, tmp_path, small_graph):
        samples = run_chain(small_graph, _short_cfg(), np.random.default_rng(0))
        path = tmp_path / "chain_0.jsonl"
        save_chain(samples, path)
        back = load_chain(path)
        assert len(back) == len(samples)
        np.testing.assert_allclose(back.log_posterior, samples.log_posterior)
        np.testing.assert_allclose(back.node_snapshots, samples.node_snapshots,
                                   atol=1e-9)
        assert back.hp_records[0].sigma == samples.hp_records[0].sigma

    def test_empty_chain_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text(json.dumps({"schema": "sparsecp.chain.v1"}) + "\n")
        with pytest.raises(DataError):
            load_chain(path)

    def test_merge(self, tmp_path, small_graph):
        s1 = run_chain(small_graph, _short_cfg(seed=1), np.random.default_rng(1))
        s2 = run_chain(small_graph, _short_cfg(seed=2), np.random.default_rng(2))
        merged = merge_samples([s1, s2])
        assert len(merged) == len(s1) + len(s2)

    def test_resume_reproduces_run(self, tmp_path, small_graph):
        # Run once uninterrupted, then replay in two halves through the
        # checkpoint machinery; records must agree exactly.
        from sparsecp.cli import fit_graph
        cfg = _short_cfg(n_iters=80, n_burnin=20, checkpoint_every=40)
        full = fit_graph(small_graph, cfg, jobs=1, out_dir=tmp_path / "full")[0]

        out = tmp_path / "halves"
        interrupted_cfg = _short_cfg(n_iters=40, n_burnin=20, checkpoint_every=40)
        fit_graph(small_graph, interrupted_cfg, jobs=1, out_dir=out)
        resumed = fit_graph(small_graph, cfg, jobs=1, out_dir=out, resume=True)[0]
        np.testing.assert_array_equal(full.iters, resumed.iters)
        np.testing.assert_allclose(full.log_posterior, resumed.log_posterior)
        np.testing.assert_allclose(full.node_snapshots, resumed.node_snapshots)

    def test_external_scores(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("node_id,score\n0,0.5\n1,0.25\n2,1.5\n")
        scores = load_external_scores(path, 3)
        np.testing.assert_allclose(scores, [0.5, 0.25, 1.5])
        with pytest.raises(DataError):
            load_external_scores(path, 5)


class TestCli:
    def test_simulate_deterministic(self, tmp_path):
        cfg = {"alpha": 30.0, "sigma": 0.2, "seed": 11}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        for sub in ("one", "two"):
            rc = main(["simulate", "--config", str(cfg_path),
                       "--out-dir", str(tmp_path / sub)])
            assert rc == 0
        for name in ("edges.csv", "nodeparams.csv", "counts.csv", "degrees.csv"):
            b1 = (tmp_path / "one" / name).read_bytes()
            b2 = (tmp_path / "two" / name).read_bytes()
            assert b1 == b2, name

    def test_simulate_rejects_bad_alpha(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"alpha": 0.0}))
        rc = main(["simulate", "--config", str(cfg_path),
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 2

    def test_unknown_config_key(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"alhpa": 3}))
        rc = main(["simulate", "--config", str(cfg_path),
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 2

    def test_fit_and_predict_pipeline(self, tmp_path):
        sim_cfg = tmp_path / "sim.json"
        sim_cfg.write_text(json.dumps({"alpha": 30.0, "seed": 1}))
        assert main(["simulate", "--config", str(sim_cfg),
                     "--out-dir", str(tmp_path)]) == 0
        fit_cfg = tmp_path / "fit.json"
        fit_cfg.write_text(json.dumps({
            "n_iters": 60, "n_burnin": 20, "thin": 5, "n_chains": 2,
            "init_iters": 10, "eps_mass": 1e-3, "seed": 2}))
        assert main(["fit", "--graph", str(tmp_path / "edges.csv"),
                     "--config", str(fit_cfg), "--out-dir", str(tmp_path / "fit")]) == 0
        assert (tmp_path / "fit" / "chain_0.jsonl").exists()
        assert (tmp_path / "fit" / "chain_1.jsonl").exists()
        assert (tmp_path / "fit" / "report.json").exists()
        report = json.loads((tmp_path / "fit" / "report.json").read_text())
        assert "acceptance" in report
        pred_cfg = tmp_path / "pred.json"
        pred_cfg.write_text(json.dumps({"n_graphs": 10, "seed": 3}))
        assert main(["predict", "--graph", str(tmp_path / "edges.csv"),
                     "--chains", str(tmp_path / "fit"),
                     "--config", str(pred_cfg),
                     "--out-dir", str(tmp_path / "pred")]) == 0
        bands = pd.read_csv(tmp_path / "pred" / "bands.csv", comment="#")
        assert {"bin_lo", "bin_hi", "band_low", "band_high"} <= set(bands.columns)
        fr = pd.read_csv(tmp_path / "pred" / "fitreport.csv", comment="#")
        assert set(fr.statistic) == {"K", "D", "L2", "U2"}

    def test_fit_rejects_burnin_overflow(self, tmp_path):
        sim_cfg = tmp_path / "sim.json"
        sim_cfg.write_text(json.dumps({"alpha": 20.0, "seed": 1}))
        main(["simulate", "--config", str(sim_cfg), "--out-dir", str(tmp_path)])
        fit_cfg = tmp_path / "fit.json"
        fit_cfg.write_text(json.dumps({"n_iters": 10, "n_burnin": 50}))
        rc = main(["fit", "--graph", str(tmp_path / "edges.csv"),
                   "--config", str(fit_cfg), "--out-dir", str(tmp_path / "f")])
        assert rc == 2

    def test_predict_missing_chains(self, tmp_path):
        sim_cfg = tmp_path / "sim.json"
        sim_cfg.write_text(json.dumps({"alpha": 20.0, "seed": 1}))
        main(["simulate", "--config", str(sim_cfg), "--out-dir", str(tmp_path)])
        rc = main(["predict", "--graph", str(tmp_path / "edges.csv"),
                   "--chains", str(tmp_path / "nochains"),
                   "--out-dir", str(tmp_path / "p")])
        assert rc == 3

    def test_asymptotics_needs_grid(self, tmp_path):
        cfg_path = tmp_path / "a.json"
        cfg_path.write_text(json.dumps({"n_alpha": 1}))
        rc = main(["asymptotics", "--config", str(cfg_path),
                   "--out-dir", str(tmp_path / "a")])
        assert rc == 2

    def test_compare_unknown_method(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({"methods": ["nonsense"]}))
        rc = main(["compare", "--config", str(cfg_path),
                   "--out-dir", str(tmp_path / "c")])
        assert rc == 2

    def test_compare_small_run(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({
            "generator": "holme", "kappa_grid": [100.0], "replicates": 2,
            "holme_nodes": 120, "holme_m_min": 4.0,
            "methods": ["sbm", "degree"], "seed": 9}))
        rc = main(["compare", "--config", str(cfg_path),
                   "--out-dir", str(tmp_path / "c")])
        assert rc == 0
        table = pd.read_csv(tmp_path / "c" / "auc.csv", comment="#")
        assert set(table.method) == {"sbm", "degree"}

    def test_console_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "sparsecp.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "simulate" in proc.stdout
