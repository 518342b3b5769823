"""Immutable undirected graphs, perturbation plans and the XOR update.

A :class:`Graph` stores its edges as a sorted ``(E, 2)`` integer array with
``u < v`` in every row.  All derived structures (adjacency matrix, neighbor
lists, edge set) are computed lazily and cached; the arrays themselves are
made read-only so a graph can be shared freely between readers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import GraphValidationError, PlanError

NONE, TRAIN, VAL, TEST = 0, 1, 2, 3
SPLIT_NAMES = {NONE: "none", TRAIN: "train", VAL: "val", TEST: "test"}
SPLIT_CODES = {name: code for code, name in SPLIT_NAMES.items()}
UNLABELED = -1

MODES = ("aug", "atk")
SOURCES = ("priority", "bridge", "lowrank", "solver")

# dense feature storage up to this many entries, CSR rows beyond
DENSE_FEATURE_LIMIT = 64_000_000


def canonical_edges(pairs, num_nodes: Optional[int] = None) -> np.ndarray:
    """Return pairs as a sorted ``(E, 2)`` int64 array with ``u < v`` per row.

    Self-loops and repeated pairs raise :class:`GraphValidationError`.
    """
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if np.any(arr < 0):
        raise GraphValidationError("negative node id in edge list")
    if num_nodes is not None and np.any(arr >= num_nodes):
        bad = arr[np.any(arr >= num_nodes, axis=1)][0]
        raise GraphValidationError(f"edge ({bad[0]}, {bad[1]}) references node >= {num_nodes}")
    if np.any(arr[:, 0] == arr[:, 1]):
        u = int(arr[arr[:, 0] == arr[:, 1]][0, 0])
        raise GraphValidationError(f"self-loop on node {u}")
    arr = np.sort(arr, axis=1)
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    arr = arr[order]
    dup = np.all(arr[1:] == arr[:-1], axis=1)
    if np.any(dup):
        u, v = arr[1:][dup][0]
        raise GraphValidationError(f"duplicate edge ({u}, {v})")
    return arr


def _readonly(a):
    if isinstance(a, np.ndarray):
        a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with node features, labels and a split.

    ``labels`` uses ``-1`` for unlabeled nodes; ``split`` holds one of the
    codes ``NONE``, ``TRAIN``, ``VAL``, ``TEST`` per node.
    """

    num_nodes: int
    edges: np.ndarray
    features: object = None
    labels: np.ndarray = None
    split: np.ndarray = None
    num_classes: int = 0

    def __post_init__(self):
        n = int(self.num_nodes)
        object.__setattr__(self, "num_nodes", n)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and not (
            np.all(edges[:, 0] < edges[:, 1])
            and np.all(np.diff(edges[:, 0] * (n + 1) + edges[:, 1]) > 0)
        ):
            edges = canonical_edges(edges, n)
        if edges.size and edges.max() >= n:
            raise GraphValidationError(f"edge references node >= {n}")
        object.__setattr__(self, "edges", _readonly(edges))

        features = self.features
        if features is None:
            features = np.zeros((n, 0))
        if sp.issparse(features):
            features = sp.csr_matrix(features, dtype=np.float64)
        else:
            features = np.asarray(features, dtype=np.float64)
            if features.ndim != 2:
                raise GraphValidationError("feature matrix must be two-dimensional")
        if features.shape[0] != n:
            raise GraphValidationError(
                f"feature matrix has {features.shape[0]} rows for {n} nodes"
            )
        object.__setattr__(self, "features", _readonly(features))

        labels = np.full(n, UNLABELED, dtype=np.int64) if self.labels is None else np.asarray(self.labels, dtype=np.int64)
        split = np.zeros(n, dtype=np.int8) if self.split is None else np.asarray(self.split, dtype=np.int8)
        if labels.shape != (n,) or split.shape != (n,):
            raise GraphValidationError("labels and split must have one entry per node")
        if np.any(labels < UNLABELED):
            raise GraphValidationError("label ids must be >= 0 (or -1 for unlabeled)")
        num_classes = int(self.num_classes) or (int(labels.max()) + 1 if n and labels.max() >= 0 else 0)
        if n and labels.max() >= num_classes:
            raise GraphValidationError(
                f"label {int(labels.max())} out of range for {num_classes} classes"
            )
        if np.any((split < NONE) | (split > TEST)):
            raise GraphValidationError("unknown split code")
        orphan = np.flatnonzero((split != NONE) & (labels == UNLABELED))
        if orphan.size:
            raise GraphValidationError(
                f"node {int(orphan[0])} is in split "
                f"'{SPLIT_NAMES[int(split[orphan[0]])]}' but has no label"
            )
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "split", _readonly(split))
        object.__setattr__(self, "num_classes", num_classes)

    # -- derived views -------------------------------------------------

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset(map(tuple, self.edges.tolist()))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency as CSR (float64)."""
        n = self.num_nodes
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u))
        a = sp.csr_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(n, n))
        a.sort_indices()
        return a

    @cached_property
    def neighbors(self) -> list:
        a = self.adjacency
        return [a.indices[a.indptr[i]:a.indptr[i + 1]] for i in range(self.num_nodes)]

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.bincount(self.edges.ravel(), minlength=self.num_nodes)
        return _readonly(deg.astype(np.int64))

    def has_edge(self, u: int, v: int) -> bool:
        if u > v:
            u, v = v, u
        return (u, v) in self.edge_set

    def nodes_in(self, which) -> np.ndarray:
        code = SPLIT_CODES[which] if isinstance(which, str) else int(which)
        return np.flatnonzero(self.split == code)

    @property
    def train_mask(self) -> np.ndarray:
        return self.split == TRAIN

    def dense_features(self) -> np.ndarray:
        f = self.features
        return f.toarray() if sp.issparse(f) else f

    def with_edges(self, edges) -> "Graph":
        """Same nodes, features, labels and split with a different edge set."""
        return Graph(self.num_nodes, canonical_edges(edges, self.num_nodes),
                     self.features, self.labels, self.split, self.num_classes)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if self.num_nodes != other.num_nodes or self.num_classes != other.num_classes:
            return False
        if not (np.array_equal(self.edges, other.edges)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.split, other.split)):
            return False
        a, b = self.features, other.features
        if a.shape != b.shape:
            return False
        if sp.issparse(a) or sp.issparse(b):
            return (sp.csr_matrix(a) != sp.csr_matrix(b)).nnz == 0
        return np.array_equal(a, b)

    __hash__ = object.__hash__

    def __repr__(self):
        return (f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, "
                f"num_features={self.num_features}, num_classes={self.num_classes})")


def _pair_tuple(pairs: Iterable) -> tuple:
    out = set()
    for u, v in pairs:
        u, v = int(u), int(v)
        if u == v:
            raise PlanError(f"plan contains self-loop ({u}, {v})")
        out.add((u, v) if u < v else (v, u))
    return tuple(sorted(out))


@dataclass(frozen=True)
class PerturbationPlan:
    """A symmetric set of edge flips; one unordered pair per entry.

    ``requested`` is the budget the producer was asked for and ``truncated``
    is set when candidate pools ran dry before reaching it.
    """

    adds: tuple = ()
    removes: tuple = ()
    mode: str = "aug"
    source: str = "priority"
    requested: Optional[int] = None
    truncated: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "adds", _pair_tuple(self.adds))
        object.__setattr__(self, "removes", _pair_tuple(self.removes))
        if self.mode not in MODES:
            raise PlanError(f"unknown plan mode {self.mode!r}")
        if self.source not in SOURCES:
            raise PlanError(f"unknown plan source {self.source!r}")
        both = set(self.adds) & set(self.removes)
        if both:
            raise PlanError(f"pair {min(both)} is both added and removed")

    @property
    def size(self) -> int:
        return len(self.adds) + len(self.removes)

    def __len__(self):
        return self.size

    def inverse(self) -> "PerturbationPlan":
        return PerturbationPlan(self.removes, self.adds, self.mode, self.source,
                                self.requested, self.truncated, dict(self.meta))

    def epr(self, graph_or_edge_count) -> float:
        """Edge perturbation ratio against the original edge count."""
        m = graph_or_edge_count.num_edges if isinstance(graph_or_edge_count, Graph) else int(graph_or_edge_count)
        if m == 0:
            return 0.0 if self.size == 0 else float("inf")
        return self.size / m


def check_plan(graph: Graph, plan: PerturbationPlan) -> None:
    n = graph.num_nodes
    for u, v in plan.adds + plan.removes:
        if v >= n:
            raise PlanError(f"plan references node {v} but graph has {n} nodes")
    es = graph.edge_set
    for pair in plan.adds:
        if pair in es:
            raise PlanError(f"cannot add existing edge {pair}")
    for pair in plan.removes:
        if pair not in es:
            raise PlanError(f"cannot remove nonexistent edge {pair}")


def apply_plan(graph: Graph, plan: PerturbationPlan) -> Graph:
    """Flip every pair in ``plan``: ``(E \\ removes) | adds``."""
    check_plan(graph, plan)
    if plan.size == 0:
        return graph
    removes = set(plan.removes)
    kept = [e for e in graph.edge_set if e not in removes]
    return graph.with_edges(kept + list(plan.adds))


def edge_homophily(graph: Graph, labeled_only: bool = True) -> float:
    """Fraction of edges joining two nodes of the same class.

    With ``labeled_only`` only edges whose endpoints both carry a label are
    counted; otherwise unlabeled endpoints count as a class mismatch.
    """
    if graph.num_edges == 0:
        raise GraphValidationError("undefined homophily: graph has no edges")
    lu = graph.labels[graph.edges[:, 0]]
    lv = graph.labels[graph.edges[:, 1]]
    if labeled_only:
        keep = (lu != UNLABELED) & (lv != UNLABELED)
        if not np.any(keep):
            raise GraphValidationError("undefined homophily: no edge has two labeled endpoints")
        lu, lv = lu[keep], lv[keep]
    same = (lu == lv) & (lu != UNLABELED)
    return float(same.mean())


def connected_components(graph: Graph):
    """Return ``(count, ids)``; component ids are ordered by smallest member."""
    n = graph.num_nodes
    comp = np.full(n, -1, dtype=np.int64)
    nbrs = graph.neighbors
    count = 0
    for s in range(n):
        if comp[s] >= 0:
            continue
        comp[s] = count
        queue = deque([s])
        while queue:
            x = queue.popleft()
            for y in nbrs[x]:
                if comp[y] < 0:
                    comp[y] = count
                    queue.append(y)
        count += 1
    return count, comp
