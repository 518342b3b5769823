import numpy as np
import pytest

from edgepert.datasets import fastgcn_split, ratio_split, remap_ids
from edgepert.errors import GraphValidationError
from edgepert.graph import NONE, TEST, TRAIN, VAL, edge_homophily
from conftest import RAW


def _split_sizes(g):
    return tuple(int((g.split == s).sum()) for s in (TRAIN, VAL, TEST))


def test_cora_shape(cora):
    assert (cora.num_nodes, cora.num_features, cora.num_classes) == (2708, 1433, 7)
    # 5429 raw citation lines; reciprocal and repeated ones collapse
    assert sum(1 for line in open(RAW / "cora" / "cora.cites") if line.strip()) == 5429
    assert cora.num_edges == 5278


def test_cora_split(cora):
    assert _split_sizes(cora) == (1208, 500, 1000)
    assert 0.75 < edge_homophily(cora) < 0.85


def test_citeseer_shape(citeseer):
    assert (citeseer.num_nodes, citeseer.num_features, citeseer.num_classes) == (3327, 3703, 6)
    assert citeseer.num_edges == 4552
    # isolated test rows absent from the pickles carry no label and no split
    unlabeled = citeseer.labels < 0
    assert unlabeled.sum() == 15 and np.all(citeseer.split[unlabeled] == NONE)
    assert _split_sizes(citeseer) == (3327 - 15 - 1500, 500, 1000)


def test_fastgcn_split_sizes_and_disjoint():
    labels = np.r_[np.zeros(2000, int), -np.ones(10, int)]
    split = fastgcn_split(labels, seed=3)
    assert [(split == s).sum() for s in (TRAIN, VAL, TEST, NONE)] == [500, 500, 1000, 10]
    assert np.all(split[-10:] == NONE)


def test_fastgcn_split_seeded():
    labels = np.zeros(1600, int)
    assert np.array_equal(fastgcn_split(labels, seed=1), fastgcn_split(labels, seed=1))
    assert not np.array_equal(fastgcn_split(labels, seed=1), fastgcn_split(labels, seed=2))


def test_fastgcn_split_too_small():
    with pytest.raises(GraphValidationError):
        fastgcn_split(np.zeros(1500, int))


def test_ratio_split_counts():
    split = ratio_split(10, seed=0)
    assert [(split == s).sum() for s in (TRAIN, VAL, TEST)] == [6, 2, 2]


def test_remap_ids_first_seen():
    assert remap_ids(["b", "a", "b", "c"]) == {"b": 0, "a": 1, "c": 2}
