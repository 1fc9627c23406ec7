import numpy as np
import pytest

from pknn import InputError, KnnConfig, LabeledDataset, NeighbourRule, knn_classify
from pknn.dataset import NeighbourIndex
from pknn.knn import query_neighbours

RULES = ["asymmetric", "boltzmann", "boltzmann2"]


def test_fixture4_majority(fixture4):
    assert knn_classify(fixture4, (0.4, 0.1), KnnConfig(3)) == 0


def test_constant_labels():
    rng = np.random.default_rng(0)
    data = LabeledDataset(rng.normal(size=(12, 2)), np.full(12, 2), 3)
    for k in range(1, 13):
        for rule in RULES:
            assert knn_classify(data, rng.normal(size=2), KnnConfig(k, rule)) == 2


def test_coincident_point_k1(fixture4):
    assert knn_classify(fixture4, (0.0, 1.5), KnnConfig(1)) == 1
    assert knn_classify(fixture4, (3.0, 3.0), KnnConfig(1)) == 1
    assert knn_classify(fixture4, (1.0, 0.0), KnnConfig(1)) == 0


def test_vote_tie_goes_to_lowest_class(fixture4):
    # neighbours {0, 2} carry labels A and B
    assert knn_classify(fixture4, (0.0, 0.5), KnnConfig(2)) == 0


def test_k_equals_n_is_global_majority():
    rng = np.random.default_rng(1)
    labels = np.array([0, 1, 1, 2, 1, 0, 1])
    data = LabeledDataset(rng.normal(size=(7, 2)), labels, 3)
    for _ in range(20):
        assert knn_classify(data, rng.normal(size=2) * 10, KnnConfig(7)) == 1


def test_boltzmann2_adds_pointing_sites():
    # the far point (10, 0) has the test point as its nearest neighbour
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0]])
    data = LabeledDataset(pts, [0, 0, 1], 2)
    order = NeighbourIndex(pts).augmented_order((5.0, 0.0))
    assert query_neighbours(order, 1, NeighbourRule.ASYMMETRIC).tolist() == [1]
    ne = query_neighbours(order, 1, NeighbourRule.BOLTZMANN2)
    assert sorted(ne.tolist()) == [1, 2]
    assert knn_classify(data, (5.0, 0.0), KnnConfig(1, "asymmetric")) == 0
    # votes {A, B} tie, lowest class wins
    assert knn_classify(data, (5.0, 0.0), KnnConfig(1, "boltzmann2")) == 0


def test_config_validation(fixture4):
    with pytest.raises(InputError):
        KnnConfig(0)
    with pytest.raises(InputError):
        knn_classify(fixture4, (0, 0), KnnConfig(5))
    with pytest.raises(InputError):
        knn_classify(fixture4, (0, 0, 0), KnnConfig(1))


def test_relabel_and_rescale_invariance():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(3, 30))
        C = int(rng.integers(2, 5))
        data = LabeledDataset(rng.normal(size=(n, 2)), rng.integers(0, C, n), C)
        perm = rng.permutation(C)
        y = rng.normal(size=2)
        s = float(rng.uniform(0.1, 10))
        scaled = LabeledDataset(data.points * s, data.labels, C)
        relabelled = LabeledDataset(data.points, perm[data.labels], C)
        for rule in RULES:
            cfg = KnnConfig(int(rng.integers(1, n + 1)), rule)
            base = knn_classify(data, y, cfg)
            assert knn_classify(scaled, y * s, cfg) == base
            # equivariance holds whenever the vote has a unique winner
            order = NeighbourIndex(data.points).augmented_order(y)
            votes = np.bincount(data.labels[query_neighbours(order, cfg.k, cfg.rule)], minlength=C)
            if np.sum(votes == votes.max()) == 1:
                assert knn_classify(relabelled, y, cfg) == perm[base]
