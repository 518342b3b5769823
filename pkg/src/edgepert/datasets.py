"""Dataset conversion, node splits and the planted-partition generator."""

from __future__ import annotations

import logging
import pickle
import warnings
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DataError, GraphValidationError
from .graph import NONE, TEST, TRAIN, UNLABELED, VAL, Graph, canonical_edges
from .io import _lines

log = logging.getLogger(__name__)


def fastgcn_split(labels, n_val=500, n_test=1000, seed=0):
    """Hold out ``n_test`` then ``n_val`` labeled nodes; train on the rest.

    Unlabeled nodes get no split tag.
    """
    labels = np.asarray(labels)
    labeled = np.flatnonzero(labels != UNLABELED)
    if n_val + n_test >= labeled.size:
        raise GraphValidationError(
            f"cannot hold out {n_val}+{n_test} nodes from {labeled.size} labeled ones")
    perm = np.random.default_rng(seed).permutation(labeled)
    split = np.full(labels.shape[0], NONE, dtype=np.int8)
    split[perm[:n_test]] = TEST
    split[perm[n_test:n_test + n_val]] = VAL
    split[perm[n_test + n_val:]] = TRAIN
    return split


def ratio_split(n, seed, fractions=(0.6, 0.2, 0.2)):
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    split = np.empty(n, dtype=np.int8)
    split[perm[:n_train]] = TRAIN
    split[perm[n_train:n_train + n_val]] = VAL
    split[perm[n_train + n_val:]] = TEST
    return split


def generate_planted_partition(classes, nodes_per_class, p_in, p_out, feature_dim,
                               seed, signal=1.0, noise=1.0) -> Graph:
    """Stochastic block model graph with noisy one-hot class features.

    Node ``i`` belongs to class ``i // nodes_per_class``.  Feature column
    ``c % feature_dim`` carries ``signal`` for class ``c``; every entry gets
    independent Gaussian noise of scale ``noise``.  The split is 60/20/20.
    """
    if classes < 1 or nodes_per_class < 1:
        raise GraphValidationError("planted partition needs at least one non-empty class")
    if not (0.0 <= p_out < p_in <= 1.0):
        raise GraphValidationError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if feature_dim < 1:
        raise GraphValidationError("feature_dim must be positive")
    rng = np.random.default_rng(seed)
    n = classes * nodes_per_class
    labels = np.repeat(np.arange(classes), nodes_per_class)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    features = rng.normal(0.0, noise, size=(n, feature_dim))
    features[np.arange(n), labels % feature_dim] += signal
    split = ratio_split(n, seed)
    return Graph(n, edges, features, labels, split, classes)


def remap_ids(raw_ids):
    """Map arbitrary hashable ids to dense ``0..N-1`` in first-seen order."""
    mapping = {}
    for rid in raw_ids:
        if rid not in mapping:
            mapping[rid] = len(mapping)
    return mapping


def convert_linqs(content_path, cites_path, seed=0, n_val=500, n_test=1000) -> Graph:
    """Read the LINQS ``.content`` / ``.cites`` pair (Cora layout).

    Citations are directed in the raw data; they are symmetrized, and
    reciprocal or repeated citations collapse to one undirected edge.
    """
    ids, rows, classes = [], [], []
    for lineno, line in _lines(content_path):
        toks = line.split()
        ids.append(toks[0])
        rows.append(np.asarray(toks[1:-1], dtype=np.float64))
        classes.append(toks[-1])
    mapping = remap_ids(ids)
    if len(mapping) != len(ids):
        raise DataError(f"{content_path}: repeated paper id")
    class_names = sorted(set(classes))
    labels = np.asarray([class_names.index(c) for c in classes], dtype=np.int64)
    features = np.vstack(rows)

    pairs = set()
    dropped = 0
    for lineno, line in _lines(cites_path):
        a, b = line.split()
        if a not in mapping or b not in mapping:
            dropped += 1
            continue
        u, v = mapping[a], mapping[b]
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    if dropped:
        log.warning("%s: %d citations reference unknown papers and were dropped", cites_path, dropped)
    split = fastgcn_split(labels, n_val=n_val, n_test=n_test, seed=seed)
    return Graph(len(ids), canonical_edges(sorted(pairs)), features, labels, split, len(class_names))


def _load_pickle(path):
    with open(path, "rb") as fh:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DeprecationWarning)
            return pickle.load(fh, encoding="latin1")


def convert_planetoid(directory, name, seed=0, n_val=500, n_test=1000) -> Graph:
    """Read the Planetoid ``ind.<name>.*`` pickles (Citeseer/Pubmed layout).

    Test rows missing from the index range (Citeseer has a few isolated ones)
    become featureless unlabeled nodes.
    """
    d = Path(directory)
    part = {k: _load_pickle(d / f"ind.{name}.{k}") for k in ("allx", "ally", "tx", "ty", "graph")}
    test_index = [int(x) for _, x in _lines(d / f"ind.{name}.test.index")]
    allx, ally = sp.csr_matrix(part["allx"]), np.asarray(part["ally"])
    tx, ty = sp.csr_matrix(part["tx"]), np.asarray(part["ty"])
    n = max(allx.shape[0], max(test_index) + 1)
    n = max(n, max(part["graph"].keys()) + 1)

    feats = sp.lil_matrix((n, allx.shape[1]))
    onehot = np.zeros((n, ally.shape[1]))
    feats[:allx.shape[0]] = allx
    onehot[:ally.shape[0]] = ally
    feats[test_index] = tx
    onehot[test_index] = ty
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), UNLABELED).astype(np.int64)

    pairs = set()
    for u, nbrs in part["graph"].items():
        for v in nbrs:
            if u != v:
                pairs.add((min(u, v), max(u, v)))
    split = fastgcn_split(labels, n_val=n_val, n_test=n_test, seed=seed)
    feats = feats.tocsr()
    features = feats.toarray() if n * feats.shape[1] <= 64_000_000 else feats
    return Graph(n, canonical_edges(sorted(pairs)), features, labels, split, ally.shape[1])
