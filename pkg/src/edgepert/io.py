"""Text formats for graphs and perturbation plans.

Graph directory layout used by :func:`save_graph_dir` / :func:`load_graph_dir`::

    edges.txt     "u v" per line
    labels.txt    "node class" per line, optional "# num_classes=C" header
    features.txt  dense CSV rows, or sparse "node idx:val idx:val ..." lines
    split.txt     "node train|val|test" per line

Lines starting with ``#`` are comments everywhere.  Plan files start with a
``mode=<aug|atk> source=<...>`` header followed by ``+ u v`` / ``- u v``
lines.
"""

from __future__ import annotations

import gzip
import logging
import os
import re
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import GraphFormatError, GraphValidationError
from .graph import (DENSE_FEATURE_LIMIT, SPLIT_CODES, SPLIT_NAMES, NONE,
                    UNLABELED, Graph, PerturbationPlan)

log = logging.getLogger(__name__)

GRAPH_FILES = {"edges": "edges.txt", "labels": "labels.txt",
               "features": "features.txt", "split": "split.txt"}

_HEADER_KV = re.compile(r"#\s*(\w+)\s*=\s*(\S+)")


def _open_text(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt")
    return open(path, "r")


def _lines(path):
    """Yield ``(lineno, stripped_line)`` for non-blank, non-comment lines."""
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def _headers(path) -> dict:
    out = {}
    with _open_text(path) as fh:
        for raw in fh:
            m = _HEADER_KV.match(raw.strip())
            if m:
                out[m.group(1)] = m.group(2)
            elif raw.strip() and not raw.lstrip().startswith("#"):
                break
    return out


def _int(tok, path, lineno, what="node id"):
    try:
        val = int(tok)
    except ValueError:
        raise GraphFormatError(path, lineno, f"bad {what} {tok!r}") from None
    if val < 0:
        raise GraphFormatError(path, lineno, f"negative {what} {val}")
    return val


def read_edges(path):
    pairs = []
    seen = set()
    directed_dups = 0
    for lineno, line in _lines(path):
        toks = line.split()
        if len(toks) != 2:
            raise GraphFormatError(path, lineno, f"expected 'u v', got {line!r}")
        u, v = _int(toks[0], path, lineno), _int(toks[1], path, lineno)
        if u == v:
            raise GraphFormatError(path, lineno, f"self-loop on node {u}")
        if (u, v) in seen:
            raise GraphFormatError(path, lineno, f"duplicate edge ({u}, {v})")
        seen.add((u, v))
        if (v, u) in seen:
            directed_dups += 1
            continue
        pairs.append((u, v))
    if directed_dups:
        log.warning("%s: %d reciprocal pairs found; treating input as directed and symmetrizing",
                    path, directed_dups)
    return pairs


def read_labels(path):
    out = {}
    for lineno, line in _lines(path):
        toks = line.split()
        if len(toks) != 2:
            raise GraphFormatError(path, lineno, f"expected 'node class', got {line!r}")
        node = _int(toks[0], path, lineno)
        try:
            cls = int(toks[1])
        except ValueError:
            raise GraphFormatError(path, lineno, f"bad class id {toks[1]!r}") from None
        if cls < 0:
            raise GraphValidationError(f"{path}:{lineno}: label {cls} out of range")
        if node in out:
            raise GraphFormatError(path, lineno, f"node {node} labeled twice")
        out[node] = cls
    return out


def read_split(path):
    out = {}
    for lineno, line in _lines(path):
        toks = line.split()
        if len(toks) != 2 or toks[1] not in ("train", "val", "test"):
            raise GraphFormatError(path, lineno, f"expected 'node train|val|test', got {line!r}")
        node = _int(toks[0], path, lineno)
        if node in out:
            raise GraphFormatError(path, lineno, f"node {node} assigned twice")
        out[node] = SPLIT_CODES[toks[1]]
    return out


def _is_sparse_format(path) -> bool:
    first = next(_lines(path), None)
    return first is not None and ":" in first[1]


def read_features(path, num_nodes=None):
    """Read dense CSV or sparse ``node idx:val`` features (auto-detected)."""
    headers = _headers(path)
    rows = list(_lines(path))
    if not rows:
        n = num_nodes or 0
        return np.zeros((n, 0))
    sparse_fmt = ":" in rows[0][1]
    if not sparse_fmt:
        data = []
        width = None
        for lineno, line in rows:
            try:
                vals = [float(t) for t in line.split(",")]
            except ValueError:
                raise GraphFormatError(path, lineno, "non-numeric value in dense feature row") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise GraphFormatError(path, lineno, f"row has {len(vals)} values, expected {width}")
            data.append(vals)
        return np.asarray(data, dtype=np.float64)

    shape = headers.get("shape")
    n_hint, f_hint = (None, None)
    if shape:
        n_hint, f_hint = (int(x) for x in shape.split(","))
    ri, ci, vals = [], [], []
    seen = set()
    for lineno, line in rows:
        toks = line.split()
        node = _int(toks[0], path, lineno)
        if node in seen:
            raise GraphFormatError(path, lineno, f"node {node} has two feature rows")
        seen.add(node)
        for tok in toks[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise GraphFormatError(path, lineno, f"expected idx:val, got {tok!r}")
            ri.append(node)
            ci.append(_int(idx, path, lineno, "feature index"))
            try:
                vals.append(float(val))
            except ValueError:
                raise GraphFormatError(path, lineno, f"bad feature value {val!r}") from None
    n = max(num_nodes or 0, n_hint or 0, (max(ri) + 1) if ri else 0, max(seen) + 1)
    f = max(f_hint or 0, (max(ci) + 1) if ci else 0)
    mat = sp.csr_matrix((vals, (ri, ci)), shape=(n, f), dtype=np.float64)
    if n * f <= DENSE_FEATURE_LIMIT:
        return mat.toarray()
    return mat


def load_graph(edge_path, label_path, feature_path, split_path, num_classes=None) -> Graph:
    """Parse the four text files and return a validated :class:`Graph`."""
    pairs = read_edges(edge_path)
    labels = read_labels(label_path)
    split = read_split(split_path)
    headers = _headers(label_path)
    if num_classes is None and "num_classes" in headers:
        num_classes = int(headers["num_classes"])
    sparse_fmt = _is_sparse_format(feature_path)
    features = read_features(feature_path)

    ids = [features.shape[0] - 1]
    if pairs:
        ids.append(max(max(p) for p in pairs))
    ids += [max(labels, default=-1), max(split, default=-1)]
    n = max(ids) + 1
    if features.shape[0] < n:
        if not sparse_fmt and features.shape[1]:
            raise GraphValidationError(
                f"dense feature file has {features.shape[0]} rows but node ids reach {n - 1}")
        features = read_features(feature_path, num_nodes=n)

    lab = np.full(n, UNLABELED, dtype=np.int64)
    for node, cls in labels.items():
        lab[node] = cls
    if num_classes is not None and lab.max(initial=-1) >= num_classes:
        bad = int(np.argmax(lab))
        raise GraphValidationError(
            f"label {int(lab[bad])} of node {bad} out of range for {num_classes} classes")
    spl = np.full(n, NONE, dtype=np.int8)
    for node, code in split.items():
        spl[node] = code
    return Graph(n, pairs, features, lab, spl, num_classes or 0)


def load_graph_dir(path, num_classes=None) -> Graph:
    p = Path(path)
    return load_graph(p / GRAPH_FILES["edges"], p / GRAPH_FILES["labels"],
                      p / GRAPH_FILES["features"], p / GRAPH_FILES["split"],
                      num_classes=num_classes)


def save_graph_dir(graph: Graph, path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    with open(p / GRAPH_FILES["edges"], "w") as fh:
        fh.write(f"# nodes={graph.num_nodes} edges={graph.num_edges}\n")
        for u, v in graph.edges.tolist():
            fh.write(f"{u} {v}\n")
    with open(p / GRAPH_FILES["labels"], "w") as fh:
        fh.write(f"# num_classes={graph.num_classes}\n")
        for node in np.flatnonzero(graph.labels != UNLABELED).tolist():
            fh.write(f"{node} {int(graph.labels[node])}\n")
    with open(p / GRAPH_FILES["split"], "w") as fh:
        for node in np.flatnonzero(graph.split != NONE).tolist():
            fh.write(f"{node} {SPLIT_NAMES[int(graph.split[node])]}\n")
    write_features(graph.features, p / GRAPH_FILES["features"])
    return p


def write_features(features, path):
    """Sparse line format unless the matrix is mostly nonzero."""
    n, f = features.shape
    nnz = features.nnz if sp.issparse(features) else int(np.count_nonzero(features))
    with open(path, "w") as fh:
        if f and nnz > 0.5 * n * f and not sp.issparse(features):
            for row in features:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
            return
        fh.write(f"# shape={n},{f}\n")
        csr = sp.csr_matrix(features)
        for i in range(n):
            lo, hi = csr.indptr[i], csr.indptr[i + 1]
            toks = [f"{j}:{float(x)!r}" for j, x in zip(csr.indices[lo:hi].tolist(), csr.data[lo:hi].tolist())]
            fh.write(" ".join([str(i)] + toks) + "\n")


# -- plan files ---------------------------------------------------------

def format_plan(plan: PerturbationPlan) -> str:
    lines = [f"mode={plan.mode} source={plan.source}"]
    lines += [f"+ {u} {v}" for u, v in plan.adds]
    lines += [f"- {u} {v}" for u, v in plan.removes]
    return "\n".join(lines) + "\n"


def write_plan(plan: PerturbationPlan, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(format_plan(plan))
    os.replace(tmp, path)
    return path


def read_plan(path) -> PerturbationPlan:
    header = None
    adds, removes = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                kv = dict(tok.split("=", 1) for tok in line.split() if "=" in tok)
                if "mode" not in kv or "source" not in kv:
                    raise GraphFormatError(path, lineno, "plan header must be 'mode=... source=...'")
                header = kv
                continue
            toks = line.split()
            if len(toks) != 3 or toks[0] not in "+-":
                raise GraphFormatError(path, lineno, f"expected '+ u v' or '- u v', got {line!r}")
            pair = (_int(toks[1], path, lineno), _int(toks[2], path, lineno))
            (adds if toks[0] == "+" else removes).append(pair)
    if header is None:
        # an empty file is an empty plan
        return PerturbationPlan(mode="aug", source="priority")
    return PerturbationPlan(adds, removes, header["mode"], header["source"])
