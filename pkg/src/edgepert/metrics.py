"""Graph attribute metrics with one global scalar each.

Distances are unweighted BFS hops.  All-pairs work is done in blocks of
source nodes so memory stays at ``O(N * block)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .errors import ConvergenceError, GraphValidationError
from .graph import Graph

SOURCE_BLOCK = 256
REPORT_KEYS = ("ge", "cc", "dd_mean", "dd_hist", "nd", "ec_mean", "cl_mean", "bc_mean", "dc_mean")


def _adj(graph: Graph) -> sp.csr_matrix:
    return graph.adjacency


def distance_blocks(graph: Graph, block=SOURCE_BLOCK):
    """Yield ``(sources, dist)`` with ``dist[k, v]`` the hop distance (inf if unreachable)."""
    a = _adj(graph)
    n = graph.num_nodes
    for start in range(0, n, block):
        src = np.arange(start, min(start + block, n))
        yield src, shortest_path(a, method="D", directed=False, unweighted=True, indices=src)


def all_pairs_distances(graph: Graph) -> np.ndarray:
    return np.vstack([d for _, d in distance_blocks(graph)]) if graph.num_nodes else np.zeros((0, 0))


def global_efficiency(graph: Graph) -> float:
    """Mean of ``1/d(u, v)`` over ordered pairs ``u != v``; unreachable pairs count 0."""
    n = graph.num_nodes
    if n < 2:
        raise GraphValidationError("global efficiency needs at least two nodes")
    total = 0.0
    for src, d in distance_blocks(graph):
        d = d.copy()
        d[np.arange(len(src)), src] = np.inf
        total += float((1.0 / d).sum())
    return total / (n * (n - 1))


def local_clustering(graph: Graph) -> np.ndarray:
    a = _adj(graph)
    deg = graph.degrees.astype(float)
    # triangles through v: common-neighbor counts summed over v's edges, halved
    tri = np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() / 2.0
    denom = deg * (deg - 1)
    return np.divide(2.0 * tri, denom, out=np.zeros_like(deg), where=deg >= 2)


def average_clustering(graph: Graph) -> float:
    return float(local_clustering(graph).mean()) if graph.num_nodes else 0.0


def degree_stats(graph: Graph):
    """``({degree: count}, mean degree)``."""
    deg = graph.degrees
    values, counts = np.unique(deg, return_counts=True)
    hist = {int(v): int(c) for v, c in zip(values, counts)}
    mean = 2.0 * graph.num_edges / graph.num_nodes if graph.num_nodes else 0.0
    return hist, mean


def neighbor_degrees(graph: Graph) -> np.ndarray:
    deg = graph.degrees.astype(float)
    s = _adj(graph) @ deg
    return np.divide(s, deg, out=np.zeros_like(deg), where=deg > 0)


def average_neighbor_degree(graph: Graph) -> float:
    return float(neighbor_degrees(graph).mean()) if graph.num_nodes else 0.0


def eigenvector_centrality(graph: Graph, tol=1e-6, max_iters=1000):
    """Power iteration on ``A + I`` from the uniform vector; returns ``(x, mean)``."""
    if graph.num_edges == 0:
        raise GraphValidationError("eigenvector centrality needs at least one edge")
    n = graph.num_nodes
    m = _adj(graph) + sp.identity(n, format="csr")
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(max_iters):
        y = m @ x
        y /= np.linalg.norm(y)
        if np.abs(y - x).max() < tol:
            return y, float(y.mean())
        x = y
    raise ConvergenceError(f"eigenvector centrality did not converge in {max_iters} iterations", last=x)


def closeness_centrality(graph: Graph):
    """Reachable-only closeness scaled by the reachable fraction; ``(c, mean)``."""
    n = graph.num_nodes
    if n < 2:
        raise GraphValidationError("closeness needs at least two nodes")
    out = np.zeros(n)
    for src, d in distance_blocks(graph):
        fin = np.isfinite(d)
        r = fin.sum(axis=1) - 1
        tot = np.where(fin, d, 0.0).sum(axis=1)
        c = np.divide(r * r, (n - 1) * tot, out=np.zeros(len(src)), where=tot > 0)
        out[src] = c
    return out, float(out.mean())


def betweenness_centrality(graph: Graph, block=SOURCE_BLOCK):
    """Normalized betweenness by Brandes accumulation; ``(bc, mean)``.

    Sources are processed in blocks, each block advancing its BFS frontiers
    and dependency sweeps level by level.  Blocks reduce in source order.
    """
    n = graph.num_nodes
    bc = np.zeros(n)
    if n < 3 or graph.num_edges == 0:
        return bc, 0.0
    a = _adj(graph)
    for start in range(0, n, block):
        src = np.arange(start, min(start + block, n))
        k = len(src)
        cols = np.arange(k)
        sigma = np.zeros((n, k))
        level = np.full((n, k), -1, dtype=np.int64)
        sigma[src, cols] = 1.0
        level[src, cols] = 0
        frontier = np.zeros((n, k))
        frontier[src, cols] = 1.0
        depth = 0
        while True:
            reach = a @ frontier
            new = (reach > 0) & (level < 0)
            if not new.any():
                break
            depth += 1
            level[new] = depth
            frontier = np.where(new, reach, 0.0)
            sigma += frontier
        delta = np.zeros((n, k))
        for lvl in range(depth, 0, -1):
            at = level == lvl
            coef = np.where(at, (1.0 + delta) / np.where(at, sigma, 1.0), 0.0)
            back = a @ coef
            parent = level == lvl - 1
            delta += np.where(parent, sigma * back, 0.0)
        delta[src, cols] = 0.0
        bc += delta.sum(axis=1)
    # undirected: each pair seen from both ends
    bc /= 2.0
    bc *= 2.0 / ((n - 1) * (n - 2))
    return bc, float(bc.mean())


def degree_centrality(graph: Graph):
    n = graph.num_nodes
    if n < 2:
        raise GraphValidationError("degree centrality needs at least two nodes")
    dc = graph.degrees / (n - 1)
    return dc, float(dc.mean())


@dataclass(frozen=True)
class AttributeReport:
    ge: float
    cc: float
    dd_mean: float
    dd_hist: dict
    nd: float
    ec_mean: float
    cl_mean: float
    bc_mean: float
    dc_mean: float

    def to_dict(self):
        d = asdict(self)
        d["dd_hist"] = {str(k): v for k, v in sorted(self.dd_hist.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["dd_hist"] = {int(k): int(v) for k, v in d["dd_hist"].items()}
        return cls(**{k: d[k] for k in REPORT_KEYS})

    def to_text(self) -> str:
        lines = []
        for key in REPORT_KEYS:
            v = getattr(self, key)
            if key == "dd_hist":
                v = ",".join(f"{k}:{c}" for k, c in sorted(v.items()))
            else:
                v = repr(float(v))
            lines.append(f"{key}={v}")
        return "\n".join(lines) + "\n"

    def scalars(self):
        return {k: getattr(self, k) for k in REPORT_KEYS if k != "dd_hist"}


def attribute_report(graph: Graph, ec_tol=1e-6, ec_max_iters=1000) -> AttributeReport:
    hist, mean_deg = degree_stats(graph)
    if graph.num_edges:
        _, ec = eigenvector_centrality(graph, ec_tol, ec_max_iters)
    else:
        ec = 0.0
    return AttributeReport(
        ge=global_efficiency(graph),
        cc=average_clustering(graph),
        dd_mean=mean_deg,
        dd_hist=hist,
        nd=average_neighbor_degree(graph),
        ec_mean=ec,
        cl_mean=closeness_centrality(graph)[1],
        bc_mean=betweenness_centrality(graph)[1],
        dc_mean=degree_centrality(graph)[1],
    )


def report_delta(before: AttributeReport, after: AttributeReport):
    """Per-scalar ``after - before``."""
    b, a = before.scalars(), after.scalars()
    return {k: a[k] - b[k] for k in b}
