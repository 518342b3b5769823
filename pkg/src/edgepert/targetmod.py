"""Target-guided structural modification ahead of priority perturbation.

Attack: cut bridges so the graph falls apart into more components.
Augmentation: learn per-edge weights with a small MLP that lowers the
top-k nuclear norm of the weighted adjacency, and drop the weakest edges,
heterophilic ones first.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import epd
from .errors import ConvergenceError, GraphValidationError
from .graph import TRAIN, Graph, PerturbationPlan, connected_components

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BridgeSet:
    bridges: tuple
    components_before: int
    components_after_full_removal: int
    # size of the side of each bridge that hangs below it in the DFS tree
    subtree_sizes: dict = field(default_factory=dict, compare=False)
    component_sizes: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Modification:
    graph: Graph
    removed: tuple
    truncated: bool = False
    trace: list = field(default_factory=list, compare=False)


def find_bridges(graph: Graph) -> BridgeSet:
    """All cut edges, by an iterative low-link DFS."""
    n = graph.num_nodes
    nbrs = graph.neighbors
    ids = np.zeros(n, dtype=np.int64)  # 0 = unvisited
    low = np.zeros(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    root_of = np.full(n, -1, dtype=np.int64)
    comp_size = {}
    time = 0
    found = []
    for root in range(n):
        if ids[root]:
            continue
        time += 1
        ids[root] = low[root] = time
        root_of[root] = root
        stack = [(root, -1, 0)]
        members = 1
        while stack:
            cur, parent, i = stack[-1]
            adj = nbrs[cur]
            if i < len(adj):
                stack[-1] = (cur, parent, i + 1)
                v = int(adj[i])
                if v == parent:
                    continue
                if not ids[v]:
                    time += 1
                    ids[v] = low[v] = time
                    root_of[v] = root
                    members += 1
                    stack.append((v, cur, 0))
                else:
                    low[cur] = min(low[cur], ids[v])
            else:
                stack.pop()
                if parent >= 0:
                    low[parent] = min(low[parent], low[cur])
                    size[parent] += size[cur]
                    if ids[parent] < low[cur]:
                        found.append((min(parent, cur), max(parent, cur), cur))
        comp_size[root] = members

    found.sort()
    bridges = tuple((u, v) for u, v, _ in found)
    subtree = {(u, v): int(size[child]) for u, v, child in found}
    comps = {(u, v): comp_size[int(root_of[u])] for u, v, _ in found}
    before, _ = connected_components(graph)
    bset = set(bridges)
    after, _ = connected_components(graph.with_edges([e for e in graph.edge_set if e not in bset]))
    return BridgeSet(bridges, before, after, subtree, comps)


def bridge_attack_modify(graph: Graph, max_removed: int, seed: int,
                         prefer_balanced: bool = False) -> Modification:
    """Remove up to ``max_removed`` bridges, sampled uniformly by default.

    With ``prefer_balanced`` the bridges whose two sides are closest in size
    go first.  Every removed bridge adds exactly one component.
    """
    if max_removed < 0:
        raise ValueError("max_removed must be non-negative")
    bs = find_bridges(graph)
    pool = list(bs.bridges)
    if prefer_balanced:
        pool.sort(key=lambda e: (abs(bs.component_sizes[e] - 2 * bs.subtree_sizes[e]), e))
        chosen = pool[:max_removed]
    else:
        rng = np.random.default_rng(seed)
        pick = rng.permutation(len(pool))[:max_removed]
        chosen = [pool[i] for i in pick.tolist()]
    chosen = tuple(sorted(chosen))
    truncated = len(chosen) < max_removed
    if truncated:
        log.warning("only %d bridges available, %d requested", len(pool), max_removed)
    if not chosen:
        return Modification(graph, (), truncated)
    drop = set(chosen)
    out = graph.with_edges([e for e in graph.edge_set if e not in drop])
    return Modification(out, chosen, truncated,
                        [{"components_before": bs.components_before, "removed": len(chosen)}])


def _orth(a):
    q, _ = np.linalg.qr(a)
    return q


def top_k_singular(matrix, k: int, tol: float = 1e-8, max_iters: int = 1000,
                   seed: int = 0, init: Optional[np.ndarray] = None, oversample: int = 10):
    """Leading ``k`` singular triplets by block subspace iteration.

    Returns ``(sigma, U, V)`` with ``sigma`` descending and ``U``, ``V``
    holding the singular vectors as columns.  Iteration runs on a block of
    ``k + oversample`` vectors with a Rayleigh-Ritz step each round and stops
    once no singular value estimate moves by more than ``tol`` relative to
    the largest one.  ``init`` warm-starts the right block.
    """
    m_rows, n = matrix.shape
    if not 1 <= k <= min(m_rows, n):
        raise ValueError(f"k must be in [1, {min(m_rows, n)}], got {k}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = min(k + max(oversample, 0), min(m_rows, n))
    rng = np.random.default_rng(seed)
    start = rng.standard_normal((n, b))
    if init is not None:
        cols = min(init.shape[1], b)
        start[:, :cols] = init[:, :cols]
    v = _orth(start)
    mt = matrix.T
    prev = None
    for it in range(1, max_iters + 1):
        y = np.asarray(matrix @ v)
        ub, s, wt = np.linalg.svd(y, full_matrices=False)
        sigma = s[:k]
        if prev is not None:
            scale = max(sigma[0], np.finfo(float).tiny)
            if np.max(np.abs(sigma - prev)) <= tol * scale:
                vk = v @ wt.T[:, :k]
                return sigma.copy(), ub[:, :k], vk
        if sigma[0] == 0.0:
            return sigma.copy(), ub[:, :k], v[:, :k]
        prev = sigma
        v = _orth(np.asarray(mt @ y))
    raise ConvergenceError(
        f"top-{k} singular values did not converge in {max_iters} iterations",
        last=(prev, ub[:, :k], v @ wt.T[:, :k]))


# -- low-rank augmentation ---------------------------------------------

@dataclass(frozen=True)
class LowRankConfig:
    hidden: int = 32
    top_k: int = 20
    learning_rate: float = 1e-3
    epochs: int = 200
    removal_per_epoch: Optional[int] = None
    svd_tol: float = 1e-10
    svd_max_iters: int = 500

    def removals(self, num_edges):
        if self.removal_per_epoch is not None:
            return max(1, int(self.removal_per_epoch))
        return max(1, math.ceil(0.001 * num_edges))


class LowRankScorer:
    """Two-layer MLP scoring an edge from the features of its endpoints.

    The first layer acts on ``concat(x_u, x_v)``, which splits into one
    matrix per endpoint; the score is the mean of the sigmoid outputs for
    both endpoint orders, so it is symmetric in ``(u, v)``.
    """

    def __init__(self, num_features, config: LowRankConfig, seed=0):
        rng = np.random.default_rng(seed)
        h = config.hidden
        r = np.sqrt(6.0 / (2 * num_features + h))
        self.wa = rng.uniform(-r, r, (num_features, h))
        self.wb = rng.uniform(-r, r, (num_features, h))
        self.b1 = np.zeros(h)
        r2 = np.sqrt(6.0 / (h + 1))
        self.w2 = rng.uniform(-r2, r2, h)
        self.b2 = 0.0
        self.config = config
        self._t = 0
        self._m = {}
        self._v = {}

    def _adam(self, grads, b1=0.9, b2=0.999, eps=1e-8):
        self._t += 1
        lr = self.config.learning_rate
        for name, g in grads.items():
            g = np.asarray(g, dtype=float)
            m = self._m.get(name, np.zeros_like(g))
            v = self._v.get(name, np.zeros_like(g))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            self._m[name], self._v[name] = m, v
            upd = lr * (m / (1 - b1 ** self._t)) / (np.sqrt(v / (1 - b2 ** self._t)) + eps)
            setattr(self, name, getattr(self, name) - upd)

    def _half(self, xa, xb, u, v):
        pre = xa[u] + xb[v] + self.b1
        hid = np.maximum(pre, 0.0)
        out = 1.0 / (1.0 + np.exp(-(hid @ self.w2 + self.b2)))
        return pre, hid, out

    def weights(self, x, edges):
        xa, xb = x @ self.wa, x @ self.wb
        u, v = edges[:, 0], edges[:, 1]
        _, _, o1 = self._half(xa, xb, u, v)
        _, _, o2 = self._half(xa, xb, v, u)
        return 0.5 * (o1 + o2)

    def step(self, x, edges, grad_w):
        """One Adam step given ``d loss / d weight`` per edge."""
        xa, xb = x @ self.wa, x @ self.wb
        u, v = edges[:, 0], edges[:, 1]
        n, f = x.shape
        g = {"wa": np.zeros_like(self.wa), "wb": np.zeros_like(self.wb),
             "b1": np.zeros_like(self.b1), "w2": np.zeros_like(self.w2), "b2": 0.0}
        for first, second in ((u, v), (v, u)):
            pre, hid, out = self._half(xa, xb, first, second)
            dout = 0.5 * grad_w * out * (1.0 - out)
            g["w2"] += hid.T @ dout
            g["b2"] += float(dout.sum())
            dpre = np.outer(dout, self.w2) * (pre > 0)
            g["b1"] += dpre.sum(axis=0)
            scatter_a = sp.csr_matrix((np.ones(len(first)), (first, np.arange(len(first)))), shape=(n, len(first)))
            scatter_b = sp.csr_matrix((np.ones(len(second)), (second, np.arange(len(second)))), shape=(n, len(second)))
            g["wa"] += np.asarray(x.T @ (scatter_a @ dpre))
            g["wb"] += np.asarray(x.T @ (scatter_b @ dpre))
        self._adam(g)
        return g


def weighted_adjacency(n, edges, w):
    u, v = edges[:, 0], edges[:, 1]
    return sp.csr_matrix((np.r_[w, w], (np.r_[u, v], np.r_[v, u])), shape=(n, n))


def nuclear_subgradient_on_edges(u_vecs, v_vecs, edges):
    """``d sum(sigma) / d w_e`` for a symmetric weight on pair ``e``."""
    a, b = edges[:, 0], edges[:, 1]
    return np.einsum("ij,ij->i", u_vecs[a], v_vecs[b]) + np.einsum("ij,ij->i", u_vecs[b], v_vecs[a])


class _Spectrum:
    """Top-k nuclear norm with a warm-started subspace between calls."""

    def __init__(self, n, config, seed):
        self.k = min(config.top_k, n)
        self.config = config
        self.seed = seed
        self.block = None

    def __call__(self, m):
        try:
            s, u, v = top_k_singular(m, self.k, self.config.svd_tol, self.config.svd_max_iters,
                                     self.seed, init=self.block)
        except ConvergenceError as exc:
            s, u, v = exc.last
            log.debug("top-k iteration hit the cap; using the last iterate")
        self.block = v
        return float(np.sum(s)), u, v


def _accept_removals(spectrum, n, alive, w, order, want, base, max_checks=8):
    """Largest prefix-wise batch of ``order`` whose removal keeps the norm <= base."""
    accepted = []
    current = base
    pos = 0
    size = want
    checks = 0
    keep = np.ones(len(alive), dtype=bool)
    while len(accepted) < want and pos < len(order) and checks < max_checks:
        size = max(1, min(size, want - len(accepted), len(order) - pos))
        trial = order[pos:pos + size]
        keep[trial] = False
        value, _, _ = spectrum(weighted_adjacency(n, alive[keep], w[keep]))
        checks += 1
        if value <= current:
            accepted.extend(trial.tolist())
            current = value
            pos += size
        else:
            keep[trial] = True
            if size == 1:
                pos += 1
            else:
                size //= 2
    return accepted, current


def lowrank_aug_modify(graph: Graph, config: Optional[LowRankConfig] = None,
                       total_epr_cap: float = 0.05, seed: int = 0) -> Modification:
    """Drop low-weight edges while training the scorer against the nuclear norm.

    Each epoch scores all surviving edges, takes one gradient step that
    lowers the top-k nuclear norm of the weighted adjacency, then removes up
    to ``removal_per_epoch`` edges: known heterophilic train edges first,
    lowest weight first within each group.  A removal is kept only if the
    top-k nuclear norm at the current weights does not go up.
    """
    config = config or LowRankConfig()
    if graph.num_features == 0:
        raise GraphValidationError("low-rank modification needs node features")
    if not 0.0 <= total_epr_cap < 1.0:
        raise ValueError("total_epr_cap must lie in [0, 1)")
    cap = int(math.floor(total_epr_cap * graph.num_edges + 1e-9))
    if cap == 0 or graph.num_edges == 0:
        return Modification(graph, ())

    x = graph.dense_features()
    n = graph.num_nodes
    scorer = LowRankScorer(graph.num_features, config, seed)
    spectrum = _Spectrum(n, config, seed)
    per_epoch = config.removals(graph.num_edges)
    labels, split = graph.labels, graph.split

    alive = graph.edges.copy()
    removed = []
    trace = []
    for epoch in range(1, config.epochs + 1):
        if len(removed) >= cap or len(alive) == 0:
            break
        w = scorer.weights(x, alive)
        loss, uk, vk = spectrum(weighted_adjacency(n, alive, w))
        grad = nuclear_subgradient_on_edges(uk, vk, alive)
        scorer.step(x, alive, grad)

        w = scorer.weights(x, alive)
        base, uk, vk = spectrum(weighted_adjacency(n, alive, w))
        # first-order screen: dropping e changes the norm by about -w_e * g_e
        g_post = nuclear_subgradient_on_edges(uk, vk, alive)
        hetero = ((split[alive[:, 0]] == TRAIN) & (split[alive[:, 1]] == TRAIN)
                  & (labels[alive[:, 0]] != labels[alive[:, 1]]))
        order = np.lexsort((alive[:, 1], alive[:, 0], w, ~hetero))
        order = order[g_post[order] >= 0]
        want = min(per_epoch, cap - len(removed))
        accepted, after = _accept_removals(spectrum, n, alive, w, order, want, base)
        keep = np.ones(len(alive), dtype=bool)
        keep[accepted] = False
        trace.append({"epoch": epoch, "nuclear_loss": loss, "nuclear_before": base,
                      "nuclear_after": after, "removed": len(accepted),
                      "heterophilic": int(hetero[accepted].sum()) if accepted else 0})
        removed.extend(tuple(e) for e in alive[accepted].tolist())
        alive = alive[keep]

    removed = tuple(sorted(removed))
    out = graph.with_edges(alive) if removed else graph
    return Modification(out, removed, len(removed) < cap, trace)


# -- modify first, then fill the rest with priority flips ---------------

def soln2_plan(graph: Graph, mode: str, budget: int, seed: int,
               modify_share: float = 0.5, add_ratio: Optional[float] = None,
               lowrank: Optional[LowRankConfig] = None, prefer_balanced: bool = False):
    """Modify the graph, then run the priority planner on the result.

    ``modify_share`` of the pair budget goes to the structural modification
    (bridges for ``atk``, low-rank pruning for ``aug``); the priority plan
    gets whatever is left.  The returned plan is relative to the original
    graph, with the modification's removals folded into its removes.
    Returns ``(modified_graph, plan, modification)``.
    """
    if mode not in ("aug", "atk"):
        raise ValueError(f"unknown mode {mode!r}")
    share = int(math.floor(modify_share * budget))
    if mode == "atk":
        mod = bridge_attack_modify(graph, share, seed, prefer_balanced=prefer_balanced)
        source = "bridge"
    else:
        cap = share / graph.num_edges if graph.num_edges else 0.0
        mod = lowrank_aug_modify(graph, lowrank, min(cap, 0.999), seed)
        source = "lowrank"
    rest = budget - len(mod.removed)
    inner = epd.make_plan(mod.graph, mode, rest, seed, add_ratio=add_ratio,
                          exclude=frozenset(mod.removed))
    plan = PerturbationPlan(inner.adds, tuple(mod.removed) + inner.removes, mode, source,
                            requested=budget, truncated=inner.truncated or mod.truncated,
                            meta={"modified": len(mod.removed)})
    return mod.graph, plan, mod
