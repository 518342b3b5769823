"""Relaxed-adjacency optimization of perturbations by an augmented Lagrangian.

The adjacency is relaxed to ``A in [0, 1]^{N x N}`` and driven by proximal
gradient steps on

    F(A, lam) = L(A) + lam * g(A) + rho / 2 * g(A)^2,   g(A) = |A - A0|_1 - b

where ``L`` is the summed train-node cross-entropy of a frozen, pre-trained
two-layer GCN.  Augmentation uses the true labels as targets; attack uses
the most probable wrong class of the clean model.  After the outer loop the
flip scores ``|A - A0|`` are thresholded at ``zeta`` and at most ``b / 2``
pairs are kept.

Runs are deterministic for a fixed seed only with single-threaded BLAS.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GraphValidationError, NumericalError
from .gnn import GnnModel, cross_entropy, prepare_features, softmax
from .graph import TRAIN, Graph, PerturbationPlan

log = logging.getLogger(__name__)

DENSE_NODE_CAP = 4000


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "atk"
    budget: int = 0  # adjacency entries, i.e. twice the number of pairs
    zeta: float = 0.5
    rho: float = 1.0
    eta: float = 0.01
    outer_iters: int = 20
    inner_iters: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("aug", "atk"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.budget < 0 or self.budget % 2:
            raise ValueError("budget counts adjacency entries and must be a non-negative even number")
        if not 0.0 < self.zeta < 1.0:
            raise ValueError("zeta must lie in (0, 1)")
        if self.rho <= 0 or self.eta <= 0:
            raise ValueError("rho and eta must be positive")


@dataclass
class SolverState:
    A: np.ndarray
    A0: np.ndarray
    lam: float = 0.0
    trace: list = field(default_factory=list)


def init_state(graph: Graph, config: SolverConfig) -> SolverState:
    n = graph.num_nodes
    if n > DENSE_NODE_CAP:
        raise GraphValidationError(
            f"dense solver is capped at {DENSE_NODE_CAP} nodes (graph has {n}); "
            "use the priority or target-guided methods instead")
    a0 = graph.adjacency.toarray()
    np.fill_diagonal(a0, 0.0)
    a0.setflags(write=False)
    return SolverState(a0.copy(), a0, 0.0, [])


def attack_targets(model: GnnModel, graph: Graph, logits=None) -> np.ndarray:
    """Most probable incorrect class per node under the clean model."""
    if logits is None:
        from .gnn import predict
        logits = predict(model, graph)
    masked = np.array(logits, dtype=float, copy=True)
    labeled = graph.labels >= 0
    masked[np.flatnonzero(labeled), graph.labels[labeled]] = -np.inf
    return masked.argmax(axis=1)


def gcn_dense_loss_grad(A, x, w0, w1, idx, targets):
    """Summed cross-entropy on ``idx`` and its gradient w.r.t. dense ``A``.

    The normalization ``D^-1/2 (A + I) D^-1/2`` is differentiated through,
    with degrees taken as row sums.  The returned gradient is the raw,
    unsymmetrized one.
    """
    n = A.shape[0]
    at = A + np.eye(n)
    d = at.sum(axis=1)
    r = 1.0 / np.sqrt(d)
    s = at * r[:, None] * r[None, :]
    xw = np.asarray(x @ w0)
    pre = s @ xw
    h = np.maximum(pre, 0.0)
    hw = h @ w1
    z = s @ hw
    zt = z[idx]
    loss = float(cross_entropy(zt, targets).sum())

    dz = np.zeros_like(z)
    dz[idx] = softmax(zt)
    dz[idx, targets] -= 1.0
    ds = dz @ hw.T
    dh = (s.T @ dz) @ w1.T
    dpre = dh * (pre > 0)
    ds += dpre @ xw.T

    dsa = ds * at
    dr = dsa @ r + dsa.T @ r
    dd = -0.5 * dr * d ** -1.5
    grad = ds * r[:, None] * r[None, :] + dd[:, None]
    return loss, grad


def symmetrize(g):
    out = 0.5 * (g + g.T)
    np.fill_diagonal(out, 0.0)
    return out


def train_targets(model: GnnModel, graph: Graph, mode: str) -> np.ndarray:
    """Targets for the train nodes: true labels (aug) or attack targets (atk)."""
    idx = graph.nodes_in(TRAIN)
    if mode == "aug":
        return graph.labels[idx]
    return attack_targets(model, graph)[idx]


def loss_and_grad_adj(state: SolverState, model: GnnModel, graph: Graph, targets, x=None):
    """Summed train cross-entropy at ``state.A`` and its symmetrized gradient.

    ``targets`` is aligned with ``graph.nodes_in(TRAIN)``.  Pass prepared
    features as ``x`` to avoid re-normalizing them on every call.
    """
    if model.config.kind != "gcn2":
        raise ValueError("the adjacency gradient is implemented for the gcn2 model")
    if x is None:
        x = prepare_features(graph.features, model.config.row_normalize)
    loss, g = gcn_dense_loss_grad(state.A, x, model.weights["W0"], model.weights["W1"],
                                  graph.nodes_in(TRAIN), np.asarray(targets))
    return loss, symmetrize(g)


def l1_gap(state: SolverState, budget: int) -> float:
    return float(np.abs(state.A - state.A0).sum()) - budget


def lagrangian(state: SolverState, config: SolverConfig, loss: float) -> float:
    g = l1_gap(state, config.budget)
    return loss + state.lam * g + 0.5 * config.rho * g * g


def smooth_gradient(state: SolverState, config: SolverConfig, grad_loss):
    """Gradient of ``L + lam * g + rho/2 * g^2`` using ``sign(0) = 0``."""
    g = l1_gap(state, config.budget)
    return grad_loss + (state.lam + config.rho * g) * np.sign(state.A - state.A0)


def soft_threshold(d, t):
    return np.sign(d) * np.maximum(np.abs(d) - t, 0.0)


def prox_step(state: SolverState, config: SolverConfig, grad_f) -> SolverState:
    """Gradient step, then shrink the offset from ``A0`` by ``eta``."""
    b = state.A - config.eta * grad_f
    d = soft_threshold(b - state.A0, config.eta)
    a = np.clip(state.A0 + d, 0.0, 1.0)
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return replace(state, A=a)


def multiplier_update(state: SolverState, config: SolverConfig) -> SolverState:
    return replace(state, lam=state.lam + config.rho * l1_gap(state, config.budget))


def binarize(state: SolverState, config: SolverConfig) -> PerturbationPlan:
    """Flip pairs whose score ``|A - A0|`` reaches ``zeta``; keep the top ``b/2``."""
    iu, ju = np.triu_indices(state.A.shape[0], k=1)
    score = np.abs(state.A - state.A0)[iu, ju]
    hit = np.flatnonzero(score >= config.zeta)
    order = np.lexsort((ju[hit], iu[hit], -score[hit]))
    chosen = hit[order[: config.budget // 2]]
    adds, removes = [], []
    for k in chosen.tolist():
        u, v = int(iu[k]), int(ju[k])
        (removes if state.A0[u, v] > 0.5 else adds).append((u, v))
    if not chosen.size:
        log.warning("solver produced no pair above the threshold %.3f", config.zeta)
    return PerturbationPlan(adds, removes, config.mode, "solver", requested=config.budget // 2,
                            truncated=len(chosen) < config.budget // 2)


def solve(graph: Graph, model: GnnModel, config: SolverConfig):
    """Run the outer/inner loop and return ``(plan, trace)``.

    Inner iterations are monotone: a proximal step that would raise ``F``
    (at the current multiplier) is rejected and ends that inner loop early,
    since the fixed step would only be retried unchanged.  Each trace row
    holds ``iter``, ``L``, ``gap``, ``F`` and ``lambda`` at the state the
    iteration started from, plus ``outer`` (the outer iteration, from 0) and
    ``accepted`` for its step.
    """
    state = init_state(graph, config)
    if model.config.kind != "gcn2":
        raise ValueError("the adjacency gradient is implemented for the gcn2 model")
    x = prepare_features(graph.features, model.config.row_normalize)
    targets = train_targets(model, graph, config.mode)
    trace = []
    it = 0
    loss, grad = loss_and_grad_adj(state, model, graph, targets, x)
    for outer in range(config.outer_iters):
        for _ in range(config.inner_iters):
            it += 1
            gap = l1_gap(state, config.budget)
            f = lagrangian(state, config, loss)
            row = {"iter": it, "outer": outer, "L": loss, "gap": gap, "F": f, "lambda": state.lam, "accepted": False}
            trace.append(row)
            if not (np.isfinite(loss) and np.isfinite(f)):
                raise NumericalError(f"non-finite objective at iteration {it}", last=trace)
            cand = prox_step(state, config, smooth_gradient(state, config, grad))
            c_loss, c_grad = loss_and_grad_adj(cand, model, graph, targets, x)
            if not lagrangian(cand, config, c_loss) <= f:
                break
            row["accepted"] = True
            state, loss, grad = cand, c_loss, c_grad
        state = multiplier_update(state, config)
    state.trace = trace
    return binarize(state, config), trace


def format_trace(trace) -> str:
    lines = ["iter,L,gap,F,lambda,accepted"]
    for row in trace:
        lines.append(f"{row['iter']},{row['L']!r},{row['gap']!r},{row['F']!r},{row['lambda']!r},"
                     f"{int(row.get('accepted', True))}")
    return "\n".join(lines) + "\n"
