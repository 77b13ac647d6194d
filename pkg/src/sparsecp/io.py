"""File formats: edge lists, chain records, reports and checkpoints.

Every emitted CSV starts with a `# schema=<name>` line so downstream
consumers can verify compatibility; readers check it when an expected
schema is given.  Writes go through a temp-and-rename so files are never
observed half-written.
"""

from __future__ import annotations

import io as _io
import json
import os
import pickle
import tempfile
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from .model import Graph, Hyperparams
from .mcmc.chain import ChainSamples

__all__ = [
    "SCHEMAS",
    "DataError",
    "load_edge_list",
    "save_edge_list",
    "save_table",
    "load_table",
    "save_chain",
    "load_chain",
    "merge_samples",
    "load_external_scores",
    "save_checkpoint",
    "load_checkpoint",
]

SCHEMAS = {
    "edges": "sparsecp.edges.v1",
    "nodeparams": "sparsecp.nodeparams.v1",
    "counts": "sparsecp.counts.v1",
    "sweep": "sparsecp.sweep.v1",
    "chain": "sparsecp.chain.v1",
    "traces": "sparsecp.traces.v1",
    "bands": "sparsecp.bands.v1",
    "degrees": "sparsecp.degrees.v1",
    "fitreport": "sparsecp.fitreport.v1",
    "slopes": "sparsecp.slopes.v1",
    "auc": "sparsecp.auc.v1",
    "scores": "sparsecp.scores.v1",
}


class DataError(RuntimeError):
    """Malformed or incompatible input data."""


def _atomic_write(path: Path, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_table(df: pd.DataFrame, path, schema: str):
    """CSV with a schema comment line first."""
    buf = _io.StringIO()
    buf.write(f"# schema={SCHEMAS[schema]}\n")
    df.to_csv(buf, index=False)
    _atomic_write(Path(path), buf.getvalue().encode())


def read_schema_line(path) -> str | None:
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("#") and "schema=" in first:
        return first.split("schema=", 1)[1].strip()
    return None


def load_table(path, schema: str | None = None) -> pd.DataFrame:
    """Read a schema-tagged CSV; verifies the tag when schema is given."""
    if not Path(path).exists():
        raise DataError(f"no such file: {path}")
    found = read_schema_line(path)
    if schema is not None and found is not None and found != SCHEMAS[schema]:
        raise DataError(f"{path}: schema {found!r}, expected {SCHEMAS[schema]!r}")
    try:
        return pd.read_csv(path, comment="#")
    except Exception as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_edge_list(graph: Graph, path, strip_self_loops: bool = False):
    """CSV edge list: header source,target, one undirected edge per line
    with source <= target; self-loops written as i,i unless stripped."""
    edges = graph.edges
    if strip_self_loops:
        edges = tuple((i, j) for i, j in edges if i != j)
    df = pd.DataFrame(edges, columns=["source", "target"], dtype=np.int64)
    buf = _io.StringIO()
    buf.write(f"# schema={SCHEMAS['edges']}\n")
    buf.write(f"# n_nodes={graph.n_nodes}\n")
    df.to_csv(buf, index=False)
    _atomic_write(Path(path), buf.getvalue().encode())


def load_edge_list(path) -> Graph:
    """Read an edge-list CSV; duplicates are folded with a warning."""
    if not Path(path).exists():
        raise DataError(f"no such file: {path}")
    n_nodes = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                if "n_nodes=" in line:
                    n_nodes = int(line.split("n_nodes=", 1)[1])
                continue
            break
    try:
        df = pd.read_csv(path, comment="#")
    except Exception as exc:
        raise DataError(f"{path}: {exc}") from exc
    if list(df.columns[:2]) != ["source", "target"]:
        raise DataError(f"{path}: expected header source,target")
    if len(df) == 0:
        raise DataError(f"{path}: no edges")
    try:
        pairs = df[["source", "target"]].to_numpy(dtype=np.int64)
    except (TypeError, ValueError) as exc:
        bad = df[pd.to_numeric(df["source"], errors="coerce").isna()
                 | pd.to_numeric(df["target"], errors="coerce").isna()]
        line = int(bad.index[0]) + 3 if len(bad) else "?"
        raise DataError(f"{path}: non-integer edge entry near line {line}") from exc
    if n_nodes is None:
        n_nodes = int(pairs.max()) + 1
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    canon = np.unique(np.stack([lo, hi], axis=1), axis=0)
    dupes = len(pairs) - len(canon)
    if dupes:
        warnings.warn(f"{path}: folded {dupes} duplicate edge lines", stacklevel=2)
    try:
        return Graph.from_edge_array(n_nodes, canon)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _hp_to_dict(hp: Hyperparams) -> dict:
    return {"alpha": hp.alpha, "sigma": hp.sigma, "tau": hp.tau,
            "a": list(hp.a), "b": list(hp.b)}


def _hp_from_dict(d: dict) -> Hyperparams:
    return Hyperparams(alpha=d["alpha"], sigma=d["sigma"], tau=d["tau"],
                       a=tuple(d["a"]), b=tuple(d["b"]))


def save_chain(samples: ChainSamples, path, node_stride: int = 1):
    """JSON-lines chain file: a schema header record then one record per
    retained sample with hyperparameters, masses, log posterior and node
    snapshots (optionally strided to bound file size)."""
    lines = [json.dumps({
        "schema": SCHEMAS["chain"], "thin": samples.thin,
        "n_burnin": samples.n_burnin, "acceptance": samples.acceptance,
        "node_stride": node_stride,
    })]
    for r in range(len(samples)):
        snap = samples.node_snapshots[r]
        rec = {
            "iter": int(samples.iters[r]),
            "hp": _hp_to_dict(samples.hp_records[r]),
            "total_masses": samples.total_masses[r].tolist(),
            "logpost": float(samples.log_posterior[r]),
            "nodes": np.round(snap[::node_stride], 10).tolist(),
        }
        lines.append(json.dumps(rec))
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def load_chain(path) -> ChainSamples:
    if not Path(path).exists():
        raise DataError(f"no such file: {path}")
    with open(path) as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad chain header: {exc}") from exc
        if header.get("schema") != SCHEMAS["chain"]:
            raise DataError(f"{path}: unexpected chain schema {header.get('schema')!r}")
        records = [json.loads(line) for line in fh if line.strip()]
    if not records:
        raise DataError(f"{path}: chain file holds no samples")
    return ChainSamples(
        iters=np.array([r["iter"] for r in records]),
        hp_records=tuple(_hp_from_dict(r["hp"]) for r in records),
        total_masses=np.array([r["total_masses"] for r in records]),
        node_snapshots=np.array([r["nodes"] for r in records]),
        log_posterior=np.array([r["logpost"] for r in records]),
        acceptance=header.get("acceptance", {}),
        thin=header.get("thin", 1), n_burnin=header.get("n_burnin", 0),
    )


def merge_samples(chains: list[ChainSamples]) -> ChainSamples:
    """Pool retained samples across chains (ordered by chain index)."""
    if not chains:
        raise DataError("no chains to merge")
    return ChainSamples(
        iters=np.concatenate([c.iters for c in chains]),
        hp_records=tuple(hp for c in chains for hp in c.hp_records),
        total_masses=np.concatenate([c.total_masses for c in chains]),
        node_snapshots=np.concatenate([c.node_snapshots for c in chains]),
        log_posterior=np.concatenate([c.log_posterior for c in chains]),
        acceptance={f"chain_{i}": c.acceptance for i, c in enumerate(chains)},
        thin=chains[0].thin, n_burnin=chains[0].n_burnin,
    )


def load_external_scores(path, n_nodes: int) -> np.ndarray:
    """Per-node scores from an external detector: CSV node_id,score."""
    df = load_table(path)
    if list(df.columns[:2]) != ["node_id", "score"]:
        raise DataError(f"{path}: expected header node_id,score")
    scores = np.full(n_nodes, np.nan)
    ids = df["node_id"].to_numpy(dtype=np.int64)
    if ids.min() < 0 or ids.max() >= n_nodes:
        raise DataError(f"{path}: node_id out of range")
    scores[ids] = df["score"].to_numpy(dtype=float)
    if np.isnan(scores).any():
        raise DataError(f"{path}: missing scores for some nodes")
    return scores


def save_checkpoint(payload: dict, rng: np.random.Generator, path):
    """Resumable snapshot: the runner payload plus the generator state."""
    blob = pickle.dumps({"payload": payload, "rng_state": rng.bit_generator.state})
    _atomic_write(Path(path), blob)


def load_checkpoint(path):
    """Returns (payload, generator restored to the checkpointed state)."""
    with open(path, "rb") as fh:
        blob = pickle.load(fh)
    rng = np.random.default_rng()
    rng.bit_generator.state = blob["rng_state"]
    return blob["payload"], rng
