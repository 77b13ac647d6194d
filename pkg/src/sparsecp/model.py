"""Core domain types: graphs, node weights, partitions and subgraph counts.

The generative model assigns every node a base weight w0 and a score vector
beta of length K, with w[k] = beta[k] * w0.  Slot 0 is the binary core score
(beta[0] in {0, 1}); slots 1..K-1 are positive community/sociability scores.
Two nodes connect with probability 1 - exp(-2 sum_k w_i[k] w_j[k]), and a
node self-loops with probability 1 - exp(-sum_k w_i[k]^2).

All types here are immutable value objects; they can be shared freely across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Graph",
    "Hyperparams",
    "NodeParams",
    "NodeParamArray",
    "Partition",
    "SubgraphCounts",
    "connection_probability",
    "partition_core_periphery",
    "subgraph_counts",
]


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes 0..n_nodes-1; self-loops allowed.

    Edges are stored canonically as (i, j) with i <= j, sorted and
    deduplicated.  Use :meth:`from_edges` to build from arbitrary pair
    iterables.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        canon = {(i, j) if i <= j else (j, i) for i, j in edges}
        for i, j in canon:
            if not (0 <= i <= j < n_nodes):
                raise ValueError(f"edge ({i},{j}) out of range for {n_nodes} nodes")
        return cls(n_nodes=n_nodes, edges=tuple(sorted(canon)))

    @classmethod
    def from_edge_array(cls, n_nodes: int, arr: np.ndarray) -> "Graph":
        if arr.size == 0:
            return cls(n_nodes=n_nodes, edges=())
        arr = np.asarray(arr, dtype=np.int64).reshape(-1, 2)
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        if lo.min() < 0 or hi.max() >= n_nodes:
            raise ValueError("edge index out of range")
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
        return cls(n_nodes=n_nodes, edges=tuple(map(tuple, pairs.tolist())))

    @cached_property
    def edge_array(self) -> np.ndarray:
        """(n_edges, 2) int64 array, i <= j per row."""
        if not self.edges:
            return np.empty((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    @cached_property
    def degrees(self) -> np.ndarray:
        """Number of incident edges per node; a self-loop counts once."""
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        ea = self.edge_array
        if ea.size:
            np.add.at(deg, ea[:, 0], 1)
            sel = ea[:, 1] != ea[:, 0]
            np.add.at(deg, ea[sel, 1], 1)
        return deg

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 matrix; intended for small graphs."""
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=np.int8)
        ea = self.edge_array
        if ea.size:
            a[ea[:, 0], ea[:, 1]] = 1
            a[ea[:, 1], ea[:, 0]] = 1
        return a

    def relabel(self, perm: np.ndarray) -> "Graph":
        """Graph with node i renamed perm[i]."""
        perm = np.asarray(perm, dtype=np.int64)
        ea = self.edge_array
        return Graph.from_edge_array(self.n_nodes, perm[ea]) if ea.size else Graph(self.n_nodes, ())


@dataclass(frozen=True)
class NodeParams:
    """Weights of a single node: base weight w0 and score vector beta.

    beta[0] is the binary core score; beta[k] > 0 for k >= 1.  The derived
    per-slot weights are w[k] = beta[k] * w0.
    """

    w0: float
    beta: tuple[float, ...]

    def __post_init__(self):
        if self.w0 < 0:
            raise ValueError("w0 must be nonnegative")
        if self.beta[0] not in (0.0, 1.0):
            raise ValueError("beta[0] must be binary")
        if any(b <= 0 for b in self.beta[1:]):
            raise ValueError("beta[1:] must be positive")

    @property
    def w(self) -> tuple[float, ...]:
        return tuple(b * self.w0 for b in self.beta)


class NodeParamArray(Sequence):
    """Array-backed sequence of :class:`NodeParams` for fast bulk use.

    Holds w0 with shape (n,) and beta with shape (n, K); indexing yields
    NodeParams values.
    """

    def __init__(self, w0: np.ndarray, beta: np.ndarray):
        w0 = np.ascontiguousarray(np.asarray(w0, dtype=float))
        beta = np.ascontiguousarray(np.asarray(beta, dtype=float))
        if w0.ndim != 1 or beta.ndim != 2 or beta.shape[0] != w0.shape[0]:
            raise ValueError("w0 must be (n,), beta must be (n, K)")
        self.w0 = w0
        self.beta = beta
        self.w0.flags.writeable = False
        self.beta.flags.writeable = False

    @property
    def n_community_slots(self) -> int:
        return self.beta.shape[1] - 1

    @property
    def k(self) -> int:
        return self.beta.shape[1]

    @property
    def w(self) -> np.ndarray:
        return self.beta * self.w0[:, None]

    def __len__(self) -> int:
        return self.w0.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return NodeParams(w0=float(self.w0[idx]), beta=tuple(self.beta[idx]))
        return NodeParamArray(self.w0[idx], self.beta[idx])

    def subset(self, idx: np.ndarray) -> "NodeParamArray":
        return NodeParamArray(self.w0[idx], self.beta[idx])

    @classmethod
    def from_params(cls, params: Sequence[NodeParams]) -> "NodeParamArray":
        if isinstance(params, cls):
            return params
        w0 = np.array([p.w0 for p in params], dtype=float)
        beta = np.array([p.beta for p in params], dtype=float)
        return cls(w0, beta)


@dataclass(frozen=True)
class Hyperparams:
    """Model hyperparameters.

    alpha is the size parameter; (sigma, tau) parametrise the base jump
    intensity w^(-1-sigma) exp(-tau w) / Gamma(1-sigma); a[k], b[k] are the
    shape/rate pairs of the gamma score distributions for the K-1 community
    slots.  Valid regimes: sigma in (0,1) with tau >= 0, or sigma <= 0 with
    tau > 0.
    """

    alpha: float
    sigma: float
    tau: float
    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.sigma >= 1:
            raise ValueError("sigma must be < 1")
        if self.sigma > 0:
            if self.tau < 0:
                raise ValueError("tau must be >= 0 when sigma in (0,1)")
        elif self.tau <= 0:
            raise ValueError("tau must be > 0 when sigma <= 0")
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        if len(self.a) != len(self.b) or not self.a:
            raise ValueError("a and b must be nonempty and equal length")
        if any(x <= 0 for x in self.a + self.b):
            raise ValueError("a and b entries must be positive")

    @property
    def k(self) -> int:
        return len(self.a) + 1

    def replace(self, **kw) -> "Hyperparams":
        d = dict(alpha=self.alpha, sigma=self.sigma, tau=self.tau, a=self.a, b=self.b)
        d.update(kw)
        return Hyperparams(**d)


@dataclass(frozen=True)
class Partition:
    """Disjoint core/periphery sets over the connected nodes of a graph."""

    core: frozenset[int]
    periphery: frozenset[int]

    def __post_init__(self):
        if self.core & self.periphery:
            raise ValueError("core and periphery must be disjoint")

    @classmethod
    def from_sets(cls, core: Iterable[int], periphery: Iterable[int]) -> "Partition":
        return cls(core=frozenset(core), periphery=frozenset(periphery))


@dataclass(frozen=True)
class SubgraphCounts:
    """Node and edge tallies split by core/periphery class."""

    n_nodes: int
    n_core: int
    n_periph: int
    e_total: int
    e_cc: int
    e_pp: int
    e_cp: int

    def __post_init__(self):
        if self.n_core + self.n_periph != self.n_nodes:
            raise ValueError("n_core + n_periph must equal n_nodes")
        if self.e_cc + self.e_pp + self.e_cp != self.e_total:
            raise ValueError("edge counts must sum to e_total")

    def as_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes, "n_core": self.n_core,
            "n_periph": self.n_periph, "e_total": self.e_total,
            "e_cc": self.e_cc, "e_pp": self.e_pp, "e_cp": self.e_cp,
        }


def connection_probability(wi, wj, is_self: bool = False) -> float:
    """Probability that two nodes with weight vectors wi, wj connect.

    Returns 1 - exp(-2 sum_k wi[k] wj[k]) for distinct nodes and
    1 - exp(-sum_k wi[k]^2) for a self-loop (pass wj = wi).
    """
    wi = np.asarray(wi, dtype=float)
    wj = np.asarray(wj, dtype=float)
    if wi.shape != wj.shape:
        raise ValueError("weight vectors must have equal length")
    if (wi < 0).any() or (wj < 0).any():
        raise ValueError("weights must be nonnegative")
    rate = float(np.dot(wi, wj)) if is_self else 2.0 * float(np.dot(wi, wj))
    return -np.expm1(-rate)


def partition_core_periphery(params: Sequence[NodeParams], graph: Graph) -> Partition:
    """Split the connected nodes of ``graph`` by having positive core weight.

    Isolated nodes belong to neither set: the subgraph counts of interest
    only ever involve nodes with at least one connection.
    """
    pa = NodeParamArray.from_params(params)
    if len(pa) != graph.n_nodes:
        raise ValueError("params length must equal graph.n_nodes")
    connected = graph.degrees >= 1
    w1 = pa.beta[:, 0] * pa.w0
    core = np.flatnonzero(connected & (w1 > 0))
    periph = np.flatnonzero(connected & (w1 <= 0))
    return Partition.from_sets(core.tolist(), periph.tolist())


def subgraph_counts(graph: Graph, partition: Partition) -> SubgraphCounts:
    """Edge counts within the core, within the periphery and across.

    Self-loops count once and are attributed to cc or pp according to the
    node's class.  Nodes outside the partition (isolated ones) must not be
    incident to any edge.
    """
    members = partition.core | partition.periphery
    if members and (min(members) < 0 or max(members) >= graph.n_nodes):
        raise ValueError("partition index out of range")
    is_core = np.zeros(graph.n_nodes, dtype=bool)
    is_core[list(partition.core)] = True
    in_part = np.zeros(graph.n_nodes, dtype=bool)
    in_part[list(members)] = True

    ea = graph.edge_array
    if ea.size:
        if not (in_part[ea[:, 0]].all() and in_part[ea[:, 1]].all()):
            raise ValueError("partition omits a non-isolated node")
        ci = is_core[ea[:, 0]]
        cj = is_core[ea[:, 1]]
        e_cc = int(np.sum(ci & cj))
        e_pp = int(np.sum(~ci & ~cj))
        e_cp = int(np.sum(ci ^ cj))
    else:
        e_cc = e_pp = e_cp = 0
    return SubgraphCounts(
        n_nodes=len(members), n_core=len(partition.core),
        n_periph=len(partition.periphery),
        e_total=e_cc + e_pp + e_cp, e_cc=e_cc, e_pp=e_pp, e_cp=e_cp,
    )
