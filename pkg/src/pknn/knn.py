"""Majority-vote kNN on the same neighbour structures as the probabilistic model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset, NeighbourIndex, NeighbourRule
from .errors import InputError

__all__ = ["KnnConfig", "knn_classify", "query_neighbours"]


@dataclass(frozen=True)
class KnnConfig:
    k: int
    rule: NeighbourRule = NeighbourRule.ASYMMETRIC

    def __post_init__(self):
        object.__setattr__(self, "rule", NeighbourRule.parse(self.rule))
        if int(self.k) != self.k or self.k < 1:
            raise InputError(f"k must be a positive integer, got {self.k}")


def query_neighbours(order: np.ndarray, k: int, rule: NeighbourRule) -> np.ndarray:
    """Neighbours of the last site in an augmented neighbour order.

    Under the asymmetric and Boltzmann rules this is the test point's own
    kNN; under Boltzmann² it also includes every site that has the test
    point among its kNN.
    """
    n = order.shape[0] - 1
    own = order[n, :k]
    if rule is not NeighbourRule.BOLTZMANN2:
        return own
    pointing = np.flatnonzero((order[:n, :k] == n).any(axis=1))
    return np.union1d(own, pointing)


def knn_classify(train: LabeledDataset, y_new, config: KnnConfig, *,
                 index: NeighbourIndex | None = None) -> int:
    """Majority label among the test point's neighbours (ties: lowest class)."""
    if not 1 <= config.k <= train.n:
        raise InputError(f"k={config.k} out of range 1..{train.n}")
    y = train.check_point(y_new)
    index = index or NeighbourIndex(train.points)
    order = index.augmented_order(y)
    ne = query_neighbours(order, config.k, config.rule)
    votes = np.bincount(train.labels[ne], minlength=train.class_count)
    return int(np.argmax(votes))
