"""Homophily-priority perturbation plans.

The pair priority is +1 for two train nodes of the same class and -1 for two
train nodes of different classes.  Augmentation removes heterophilic edges
and adds homophilic non-edges; attack does the opposite.  The priority
matrix itself is never built: removal pools are enumerated from existing
edges and addition candidates are drawn from per-class node indexes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GraphValidationError
from .graph import TRAIN, Graph, PerturbationPlan

log = logging.getLogger(__name__)

DEFAULT_ADD_RATIO = {"aug": 0.0, "atk": 0.5}
# enumerate an add pool outright when it has at most this many pairs
ENUMERATE_LIMIT = 200_000
RETRY_FACTOR = 50


def pair_priority(u: int, v: int, graph: Graph) -> Optional[int]:
    """+1 / -1 for same / different class train pairs, ``None`` otherwise."""
    if u == v:
        raise ValueError("pair priority needs two distinct nodes")
    if graph.split[u] != TRAIN or graph.split[v] != TRAIN:
        return None
    return 1 if graph.labels[u] == graph.labels[v] else -1


@dataclass(frozen=True)
class PriorityCandidates:
    """Candidate pools for both modes over train-train pairs.

    ``aug_remove_pool`` / ``atk_remove_pool`` are ``(k, 2)`` arrays of
    existing heterophilic / homophilic edges.  Addition pools are implicit:
    ``class_nodes`` indexes train nodes per class, and the ``*_add_count``
    fields give the exact number of addable pairs.
    """

    train_nodes: np.ndarray
    class_nodes: dict
    aug_remove_pool: np.ndarray
    atk_remove_pool: np.ndarray
    aug_add_count: int
    atk_add_count: int
    edge_set: frozenset
    labels: np.ndarray

    def remove_pool(self, mode):
        return self.aug_remove_pool if mode == "aug" else self.atk_remove_pool

    def add_count(self, mode):
        return self.aug_add_count if mode == "aug" else self.atk_add_count


def build_candidates(graph: Graph) -> PriorityCandidates:
    train = graph.nodes_in(TRAIN)
    if train.size < 2:
        raise GraphValidationError("priority plans need at least two train nodes")
    labels = graph.labels
    class_nodes = {}
    for c in np.unique(labels[train]).tolist():
        class_nodes[c] = train[labels[train] == c]

    e = graph.edges
    both_train = (graph.split[e[:, 0]] == TRAIN) & (graph.split[e[:, 1]] == TRAIN)
    tt = e[both_train]
    same = labels[tt[:, 0]] == labels[tt[:, 1]]
    homo, hetero = tt[same], tt[~same]

    same_pairs = sum(len(v) * (len(v) - 1) // 2 for v in class_nodes.values())
    all_pairs = train.size * (train.size - 1) // 2
    return PriorityCandidates(
        train_nodes=train,
        class_nodes=class_nodes,
        aug_remove_pool=hetero,
        atk_remove_pool=homo,
        aug_add_count=same_pairs - len(homo),
        atk_add_count=(all_pairs - same_pairs) - len(hetero),
        edge_set=graph.edge_set,
        labels=labels,
    )


def _enumerate_adds(cands: PriorityCandidates, mode, exclude):
    out = []
    if mode == "aug":
        for nodes in cands.class_nodes.values():
            iu, ju = np.triu_indices(len(nodes), k=1)
            out.extend(zip(nodes[iu].tolist(), nodes[ju].tolist()))
    else:
        t = cands.train_nodes
        iu, ju = np.triu_indices(len(t), k=1)
        diff = cands.labels[t[iu]] != cands.labels[t[ju]]
        out.extend(zip(t[iu][diff].tolist(), t[ju][diff].tolist()))
    es = cands.edge_set
    return [(min(u, v), max(u, v)) for u, v in out
            if (min(u, v), max(u, v)) not in es and (min(u, v), max(u, v)) not in exclude]


def _sample_adds(cands: PriorityCandidates, mode, count, rng, exclude):
    """Draw ``count`` distinct addable pairs uniformly; may return fewer."""
    if count <= 0:
        return []
    available = cands.add_count(mode)
    if available <= 0:
        return []
    t = cands.train_nodes
    total_pairs = len(t) * (len(t) - 1) // 2
    if available <= ENUMERATE_LIMIT or (count * 2 >= available and total_pairs <= 25 * ENUMERATE_LIMIT):
        pool = _enumerate_adds(cands, mode, exclude)
        if count >= len(pool):
            return sorted(pool)
        pick = rng.choice(len(pool), size=count, replace=False)
        return [pool[i] for i in sorted(pick.tolist())]

    es = cands.edge_set
    chosen = set()
    if mode == "aug":
        classes = sorted(cands.class_nodes)
        weights = np.array([len(cands.class_nodes[c]) * (len(cands.class_nodes[c]) - 1) / 2
                            for c in classes], dtype=float)
        weights /= weights.sum()
    tries = 0
    max_tries = RETRY_FACTOR * count
    while len(chosen) < count and tries < max_tries:
        tries += 1
        if mode == "aug":
            nodes = cands.class_nodes[classes[rng.choice(len(classes), p=weights)]]
            i, j = rng.choice(len(nodes), size=2, replace=False)
            u, v = int(nodes[i]), int(nodes[j])
        else:
            i, j = rng.choice(len(t), size=2, replace=False)
            u, v = int(t[i]), int(t[j])
            if cands.labels[u] == cands.labels[v]:
                continue
        pair = (min(u, v), max(u, v))
        if pair in es or pair in chosen or pair in exclude:
            continue
        chosen.add(pair)
    return sorted(chosen)


def split_budget(budget: int, add_ratio: float):
    """Split a pair budget into (adds, removes); the odd pair goes to removes."""
    n_add = int(math.floor(add_ratio * budget))
    return n_add, budget - n_add


def make_plan(graph: Graph, mode: str, budget: int, seed: int,
              add_ratio: Optional[float] = None, candidates: Optional[PriorityCandidates] = None,
              exclude=frozenset()) -> PerturbationPlan:
    """Sample a priority plan of up to ``budget`` pair flips.

    The budget is split between the mode's add and remove pools by
    ``add_ratio``.  A pool that runs short is not topped up from the other
    one; the plan is marked truncated instead.  ``exclude`` lists pairs
    that must not be added.
    """
    if mode not in ("aug", "atk"):
        raise ValueError(f"unknown mode {mode!r}")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if add_ratio is None:
        add_ratio = DEFAULT_ADD_RATIO[mode]
    if not 0.0 <= add_ratio <= 1.0:
        raise ValueError("add_ratio must lie in [0, 1]")
    if budget == 0:
        return PerturbationPlan(mode=mode, source="priority", requested=0)
    cands = candidates if candidates is not None else build_candidates(graph)
    rng = np.random.default_rng(seed)
    exclude = frozenset(exclude)

    n_add, n_remove = split_budget(budget, add_ratio)
    pool = cands.remove_pool(mode)
    take = min(n_remove, len(pool))
    order = rng.permutation(len(pool))
    removes = [tuple(x) for x in pool[order[:take]].tolist()]
    adds = _sample_adds(cands, mode, n_add, rng, exclude)

    realized = len(adds) + len(removes)
    truncated = realized < budget
    if truncated:
        log.warning("priority %s plan realized %d of %d requested pairs (pools exhausted)",
                    mode, realized, budget)
    return PerturbationPlan(adds, removes, mode, "priority", requested=budget, truncated=truncated)


def budget_from_epr(graph: Graph, epr: float) -> int:
    if epr < 0:
        raise ValueError("EPR must be non-negative")
    return int(math.floor(epr * graph.num_edges + 1e-9))
