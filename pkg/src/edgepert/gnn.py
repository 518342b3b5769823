"""Two-layer GCN and SGC written directly against numpy/scipy.

Forward and backward passes are explicit; there is no autodiff.  Training is
full-batch Adam on the mean cross-entropy of the train nodes plus an L2
penalty on the first weight matrix, as in the reference GCN setup.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DataError, GraphValidationError, NumericalError
from .graph import SPLIT_CODES, TRAIN, VAL, Graph

KINDS = ("gcn2", "sgc")
CHECKPOINT_MAGIC = "EDGEPERT-GNN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GnnConfig:
    kind: str = "gcn2"
    hidden: int = 16
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    epochs: int = 100
    sgc_k: int = 2
    row_normalize: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")

    @classmethod
    def for_kind(cls, kind, **overrides):
        """Canonical hyperparameters for ``kind`` (SGC: lr 0.2, no dropout)."""
        base = dict(kind=kind)
        if kind == "sgc":
            base.update(lr=0.2, weight_decay=5e-5, dropout=0.0)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


@dataclass
class GnnModel:
    config: GnnConfig
    weights: dict = field(default_factory=dict)
    seed: int = 0

    def copy(self) -> "GnnModel":
        return GnnModel(self.config, {k: v.copy() for k, v in self.weights.items()}, self.seed)


# -- graph operators ----------------------------------------------------

def normalize_adjacency(graph_or_adj) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree of ``A + I``."""
    a = graph_or_adj.adjacency if isinstance(graph_or_adj, Graph) else graph_or_adj
    a = sp.csr_matrix(a, dtype=np.float64)
    n = a.shape[0]
    a_tilde = a + sp.identity(n, format="csr")
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    d = sp.diags(1.0 / np.sqrt(deg))
    out = (d @ a_tilde @ d).tocsr()
    out.sort_indices()
    return out


def prepare_features(features, row_normalize=True):
    """Row-normalize and pick a storage: CSR when sparse enough, else dense."""
    x = sp.csr_matrix(features, dtype=np.float64) if sp.issparse(features) else np.asarray(features, dtype=np.float64)
    if row_normalize:
        rs = np.asarray(abs(x).sum(axis=1)).ravel()
        inv = np.divide(1.0, rs, out=np.zeros_like(rs), where=rs > 0)
        x = sp.diags(inv) @ x if sp.issparse(x) else x * inv[:, None]
    if not sp.issparse(x):
        nnz = np.count_nonzero(x)
        if x.size and nnz < 0.1 * x.size:
            x = sp.csr_matrix(x)
    return x


def _glorot(rng, fan_in, fan_out):
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=(fan_in, fan_out))


def init_model(config: GnnConfig, num_features: int, num_classes: int, seed: int = 0) -> GnnModel:
    rng = np.random.default_rng(seed)
    if config.kind == "gcn2":
        w = {"W0": _glorot(rng, num_features, config.hidden),
             "W1": _glorot(rng, config.hidden, num_classes)}
    else:
        w = {"W": _glorot(rng, num_features, num_classes)}
    return GnnModel(config, w, seed)


def _check_shapes(model, x):
    first = model.weights["W0" if model.config.kind == "gcn2" else "W"]
    if x.shape[1] != first.shape[0]:
        raise GraphValidationError(
            f"model expects {first.shape[0]} features, graph has {x.shape[1]}")


def propagate(a_hat, x, k):
    out = x
    for _ in range(k):
        out = a_hat @ out
    return out.toarray() if sp.issparse(out) else np.asarray(out)


def forward(model: GnnModel, a_hat, x) -> np.ndarray:
    """Evaluation-mode logits (no dropout)."""
    _check_shapes(model, x)
    w = model.weights
    if model.config.kind == "gcn2":
        h = np.maximum(a_hat @ (x @ w["W0"]), 0.0)
        return np.asarray(a_hat @ (h @ w["W1"]))
    return propagate(a_hat, x, model.config.sgc_k) @ w["W"]


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, targets):
    """Per-row cross-entropy of integer ``targets`` under softmax(logits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return lse - z[np.arange(len(targets)), targets]


def _dropout_mask(rng, shape, p):
    if p <= 0:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


def _drop_sparse(x, rng, p):
    if p <= 0:
        return x
    x = x.copy()
    keep = rng.random(x.nnz) >= p
    x.data = np.where(keep, x.data / (1.0 - p), 0.0)
    x.eliminate_zeros()
    return x


def loss_and_grads(model, a_hat, x, labels, idx, rng=None, px=None):
    """Training loss and weight gradients.

    ``rng`` enables dropout (training mode); pass ``None`` for a
    deterministic pass, which is what the finite-difference checks use.
    ``px`` may hold the precomputed SGC propagation ``A^k X``.
    """
    cfg, w = model.config, model.weights
    p = cfg.dropout if rng is not None else 0.0
    y = labels[idx]
    m = len(idx)
    grads = {}
    if cfg.kind == "gcn2":
        if sp.issparse(x):
            xd = _drop_sparse(x, rng, p) if p > 0 else x
        else:
            mask = _dropout_mask(rng, x.shape, p) if p > 0 else None
            xd = x * mask if mask is not None else x
        xw = xd @ w["W0"]
        pre = np.asarray(a_hat @ xw)
        h = np.maximum(pre, 0.0)
        hmask = _dropout_mask(rng, h.shape, p) if p > 0 else None
        hd = h * hmask if hmask is not None else h
        logits = np.asarray(a_hat @ (hd @ w["W1"]))
        prob = softmax(logits[idx])
        loss = cross_entropy(logits[idx], y).mean()
        dlog = np.zeros_like(logits)
        dlog[idx] = prob
        dlog[idx, y] -= 1.0
        dlog /= m
        back = np.asarray(a_hat.T @ dlog)
        grads["W1"] = hd.T @ back
        dh = back @ w["W1"].T
        if hmask is not None:
            dh *= hmask
        dpre = dh * (pre > 0)
        dxw = np.asarray(a_hat.T @ dpre)
        grads["W0"] = np.asarray(xd.T @ dxw)
        loss += 0.5 * cfg.weight_decay * float(np.sum(w["W0"] ** 2))
        grads["W0"] = grads["W0"] + cfg.weight_decay * w["W0"]
    else:
        if px is None:
            px = propagate(a_hat, x, cfg.sgc_k)
        rows = px[idx]
        logits = rows @ w["W"]
        prob = softmax(logits)
        loss = cross_entropy(logits, y).mean()
        dlog = prob
        dlog[np.arange(m), y] -= 1.0
        dlog /= m
        grads["W"] = rows.T @ dlog + cfg.weight_decay * w["W"]
        loss += 0.5 * cfg.weight_decay * float(np.sum(w["W"] ** 2))
    return float(loss), grads


def _accuracy(logits, labels, idx):
    if len(idx) == 0:
        return float("nan")
    return float(np.mean(logits[idx].argmax(axis=1) == labels[idx]))


def train(model: GnnModel, graph: Graph, seed: int = 0):
    """Train a copy of ``model`` on ``graph``; return ``(model, history)``.

    ``history`` has one dict per epoch with keys epoch, loss, train_acc,
    val_acc.  A non-finite loss raises :class:`NumericalError` carrying the
    history so far.
    """
    cfg = model.config
    train_idx = graph.nodes_in(TRAIN)
    if train_idx.size == 0:
        raise DataError("cannot train: split has no train nodes")
    val_idx = graph.nodes_in(VAL)
    a_hat = normalize_adjacency(graph)
    x = prepare_features(graph.features, cfg.row_normalize)
    _check_shapes(model, x)
    labels = graph.labels
    px = propagate(a_hat, x, cfg.sgc_k) if cfg.kind == "sgc" else None

    model = model.copy()
    rng = np.random.default_rng(seed)
    b1, b2, eps = 0.9, 0.999, 1e-8
    mom = {k: np.zeros_like(v) for k, v in model.weights.items()}
    vel = {k: np.zeros_like(v) for k, v in model.weights.items()}
    history = []
    for epoch in range(1, cfg.epochs + 1):
        loss, grads = loss_and_grads(model, a_hat, x, labels, train_idx,
                                     rng=rng if cfg.dropout > 0 else None, px=px)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite training loss at epoch {epoch}", last=history)
        for k, g in grads.items():
            mom[k] = b1 * mom[k] + (1 - b1) * g
            vel[k] = b2 * vel[k] + (1 - b2) * g * g
            mhat = mom[k] / (1 - b1 ** epoch)
            vhat = vel[k] / (1 - b2 ** epoch)
            model.weights[k] -= cfg.lr * mhat / (np.sqrt(vhat) + eps)
        logits = forward(model, a_hat, x) if cfg.kind == "gcn2" else px @ model.weights["W"]
        history.append({"epoch": epoch, "loss": loss,
                        "train_acc": _accuracy(logits, labels, train_idx),
                        "val_acc": _accuracy(logits, labels, val_idx)})
    return model, history


def predict(model: GnnModel, graph: Graph) -> np.ndarray:
    a_hat = normalize_adjacency(graph)
    return forward(model, a_hat, prepare_features(graph.features, model.config.row_normalize))


def accuracy_from_logits(logits, graph: Graph, which="test") -> float:
    idx = graph.nodes_in(which)
    if idx.size == 0:
        raise DataError(f"split '{which}' is empty")
    return _accuracy(logits, graph.labels, idx)


def evaluate(model: GnnModel, graph: Graph, which="test") -> float:
    """Fraction of ``which`` nodes whose arg-max logit is the true label."""
    if (SPLIT_CODES[which] if isinstance(which, str) else which) not in SPLIT_CODES.values():
        raise ValueError(f"unknown split {which!r}")
    return accuracy_from_logits(predict(model, graph), graph, which)


# -- persistence --------------------------------------------------------

def save_checkpoint(model: GnnModel, path) -> Path:
    """Write the checkpoint layout described in the README.

    Header lines are ASCII; each tensor line ``name rows cols`` is followed
    by ``rows*cols`` little-endian float64 values in row-major order.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = asdict(model.config)
    cfg["row_normalize"] = int(cfg["row_normalize"])
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode())
        fh.write((" ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in cfg.items()) + f" seed={model.seed}\n").encode())
        names = sorted(model.weights)
        fh.write(f"tensors={len(names)}\n".encode())
        for name in names:
            arr = np.ascontiguousarray(model.weights[name], dtype="<f8")
            fh.write(f"{name} {arr.shape[0]} {arr.shape[1]}\n".encode())
            fh.write(arr.tobytes(order="C"))
    return path


def load_checkpoint(path) -> GnnModel:
    with open(path, "rb") as fh:
        magic, version = fh.readline().decode().split()
        if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
            raise DataError(f"{path}: not an edgepert checkpoint (v{CHECKPOINT_VERSION})")
        kv = dict(tok.split("=", 1) for tok in fh.readline().decode().split())
        seed = int(kv.pop("seed"))
        types = {f: type(getattr(GnnConfig(), f)) for f in GnnConfig.__dataclass_fields__}
        cfg = GnnConfig(**{k: (types[k](int(v)) if types[k] is bool else types[k](v)) for k, v in kv.items()})
        count = int(fh.readline().decode().split("=")[1])
        weights = {}
        for _ in range(count):
            name, rows, cols = fh.readline().decode().split()
            rows, cols = int(rows), int(cols)
            buf = fh.read(rows * cols * 8)
            weights[name] = np.frombuffer(buf, dtype="<f8").reshape(rows, cols).astype(np.float64)
    return GnnModel(cfg, weights, seed)


def write_history(history, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch", "loss", "train_acc", "val_acc"])
        for h in history:
            wr.writerow([h["epoch"], repr(h["loss"]), repr(h["train_acc"]), repr(h["val_acc"])])
    return path
