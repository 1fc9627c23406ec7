"""Labelled data, Euclidean distances and the three neighbour structures.

Sites are indexed ``0..N-1``. Distance ties are always broken by the lower
site index, so every graph is a deterministic function of its inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

__all__ = [
    "LabeledDataset",
    "NeighbourRule",
    "NeighbourGraph",
    "NeighbourIndex",
    "euclidean_distance",
    "build_neighbour_graph",
    "insert_test_point",
]


class NeighbourRule(enum.Enum):
    """How the directed kNN relation is turned into site interactions."""

    ASYMMETRIC = "asymmetric"
    BOLTZMANN_SYMMETRIC = "boltzmann"
    BOLTZMANN2 = "boltzmann2"

    @classmethod
    def parse(cls, value: "str | NeighbourRule") -> "NeighbourRule":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "asymmetric": cls.ASYMMETRIC,
            "asym": cls.ASYMMETRIC,
            "boltzmann": cls.BOLTZMANN_SYMMETRIC,
            "symmetric": cls.BOLTZMANN_SYMMETRIC,
            "boltzmann_symmetric": cls.BOLTZMANN_SYMMETRIC,
            "boltzmann2": cls.BOLTZMANN2,
            "boltzmann_2": cls.BOLTZMANN2,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InputError(f"unknown neighbour rule {value!r}") from None


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """``N`` feature vectors of dimension ``d`` with integer class labels.

    Parameters
    ----------
    points : array_like, shape (N, d)
    labels : array_like of int, shape (N,)
        Class indices in ``0..class_count-1``.
    class_count : int, optional
        Size of the class alphabet. Defaults to ``max(labels) + 1``.
    class_names : sequence of str, optional
        Display names, one per class index.
    """

    points: np.ndarray
    labels: np.ndarray
    class_count: int = 0
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] == 0 or points.shape[1] == 0:
            raise InputError("points must be a non-empty (N, d) array")
        labels = np.array(self.labels)
        if labels.ndim != 1 or labels.shape[0] != points.shape[0]:
            raise InputError(
                f"{points.shape[0]} points but {labels.shape} labels"
            )
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            as_int = labels.astype(np.int64)
            if not np.array_equal(as_int, labels):
                raise InputError("labels must be integer class indices")
            labels = as_int
        labels = labels.astype(np.int64)
        if np.any(labels < 0):
            raise InputError("labels must be non-negative")
        if not np.all(np.isfinite(points)):
            raise InputError("points contain non-finite values")
        class_count = int(self.class_count) or int(labels.max()) + 1
        if labels.max() >= class_count:
            raise InputError(
                f"label {labels.max()} out of range for {class_count} classes"
            )
        names = self.class_names
        if names is not None:
            names = tuple(str(n) for n in names)
            if len(names) != class_count:
                raise InputError("class_names must have one entry per class")
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "class_count", class_count)
        object.__setattr__(self, "class_names", names)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(
            self.points[index], self.labels[index], self.class_count, self.class_names
        )

    def append(self, y, label: int = 0) -> "LabeledDataset":
        """Return a copy with ``y`` added as site ``N``."""
        y = self.check_point(y)
        return LabeledDataset(
            np.vstack([self.points, y[None, :]]),
            np.append(self.labels, label),
            self.class_count,
            self.class_names,
        )

    def check_point(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != self.dim:
            raise InputError(
                f"feature vector has dimension {y.shape[0]}, expected {self.dim}"
            )
        return y


def euclidean_distance(a, b) -> float:
    """L2 distance between two feature vectors of equal dimension."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def _sorted_order(dist: np.ndarray) -> np.ndarray:
    """Per row, other sites ordered by (distance, index); self removed."""
    d = dist.copy()
    np.fill_diagonal(d, -np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, 1:]


class NeighbourIndex:
    """Brute-force neighbour ordering over a fixed set of points.

    Caches, for every site, the other sites sorted by distance so that
    graphs for any ``k`` and single test-point insertions are cheap.
    """

    def __init__(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2:
            raise InputError("points must be a 2-D array")
        self.points = points
        self.distances = cdist(points, points)
        self.order = _sorted_order(self.distances)
        rows = np.arange(points.shape[0])[:, None]
        self.sorted_distances = self.distances[rows, self.order]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def graph(self, k: int, rule) -> "NeighbourGraph":
        return _graph_from_order(self.order, k, NeighbourRule.parse(rule))

    def augmented_order(self, y_new) -> np.ndarray:
        """Neighbour order of the ``N + 1`` sites after appending ``y_new``.

        The new point gets index ``N`` and therefore loses every distance tie.
        """
        y = np.asarray(y_new, dtype=float).reshape(1, -1)
        if y.shape[1] != self.points.shape[1]:
            raise InputError(
                f"feature vector has dimension {y.shape[1]}, "
                f"expected {self.points.shape[1]}"
            )
        n = self.n
        d_new = cdist(self.points, y)[:, 0]
        # insertion slot of the new site in each training row
        pos = (self.sorted_distances <= d_new[:, None]).sum(axis=1)[:, None]
        cols = np.arange(n)[None, :]
        padded = np.concatenate([self.order, np.full((n, 1), -1)], axis=1)
        prev = np.concatenate([np.full((n, 1), -1), self.order], axis=1)
        order = np.empty((n + 1, n), dtype=np.int64)
        order[:n] = np.where(cols < pos, padded, np.where(cols == pos, n, prev))
        order[n] = np.argsort(d_new, kind="stable")
        return order


@dataclass(frozen=True, eq=False)
class NeighbourGraph:
    """Neighbour sets of every site under one :class:`NeighbourRule`.

    ``knn`` is always the directed kNN relation (row ``i`` lists the ``k``
    nearest sites of ``i``). ``neighbours`` holds the rule-specific sets:
    the kNN sets for the asymmetric and Boltzmann rules, the undirected
    closure for Boltzmann². ``incoming[i]`` lists the sites that have ``i``
    among their kNN (Boltzmann rule only).
    """

    knn: np.ndarray
    k: int
    rule: NeighbourRule

    @property
    def n_sites(self) -> int:
        return self.knn.shape[0]

    @cached_property
    def neighbours(self) -> tuple[np.ndarray, ...]:
        if self.rule is NeighbourRule.BOLTZMANN2:
            sym = [set(row.tolist()) for row in self.knn]
            for i, row in enumerate(self.knn):
                for j in row:
                    sym[j].add(i)
            return tuple(_readonly(np.array(sorted(s), dtype=np.int64)) for s in sym)
        return tuple(_readonly(row) for row in np.sort(self.knn, axis=1))

    @cached_property
    def incoming(self) -> tuple[np.ndarray, ...] | None:
        if self.rule is not NeighbourRule.BOLTZMANN_SYMMETRIC:
            return None
        inc = [[] for _ in range(self.n_sites)]
        for i, row in enumerate(self.knn):
            for j in row:
                inc[j].append(i)
        return tuple(_readonly(np.array(v, dtype=np.int64)) for v in inc)

    def adjacency(self) -> np.ndarray:
        """Directed 0/1 matrix with ``A[i, j] = 1`` iff ``j`` in ``ne(i)``."""
        n = self.n_sites
        a = np.zeros((n, n), dtype=np.int64)
        for i, ne in enumerate(self.neighbours):
            a[i, ne] = 1
        return a

    def interaction_matrix(self) -> np.ndarray:
        """Integer weights ``W`` so that agreement counts are ``W @ onehot``.

        Asymmetric and Boltzmann² use the adjacency of ``neighbours``; the
        Boltzmann rule adds the incoming edges, so mutual pairs weigh 2.
        The array is cached and read-only.
        """
        return self._weights

    @cached_property
    def _weights(self) -> np.ndarray:
        n = self.n_sites
        a = np.zeros((n, n), dtype=np.int64)
        a[np.arange(n)[:, None], self.knn] = 1
        if self.rule is NeighbourRule.BOLTZMANN_SYMMETRIC:
            a = a + a.T
        elif self.rule is NeighbourRule.BOLTZMANN2:
            a = np.maximum(a, a.T)
        return _readonly(a)

    def neighbour_sets(self) -> list[set[int]]:
        return [set(int(j) for j in ne) for ne in self.neighbours]

    def __eq__(self, other):
        if not isinstance(other, NeighbourGraph):
            return NotImplemented
        return (
            self.rule is other.rule
            and self.k == other.k
            and np.array_equal(self.knn, other.knn)
            and self.neighbour_sets() == other.neighbour_sets()
        )

    __hash__ = None


def _graph_from_order(order: np.ndarray, k: int, rule: NeighbourRule) -> NeighbourGraph:
    n = order.shape[0]
    if not 1 <= k <= n - 1:
        raise InputError(f"k={k} out of range 1..{n - 1}")
    knn = _readonly(np.ascontiguousarray(order[:, :k]))
    return NeighbourGraph(knn, k, rule)


def build_neighbour_graph(data: LabeledDataset, k: int, rule) -> NeighbourGraph:
    """Neighbour graph of ``data`` for ``k`` neighbours under ``rule``."""
    rule = NeighbourRule.parse(rule)
    if not 1 <= k <= data.n - 1:
        raise InputError(f"k={k} out of range 1..{data.n - 1}")
    return NeighbourIndex(data.points).graph(k, rule)


def insert_test_point(graph: NeighbourGraph, data: LabeledDataset, y_new) -> NeighbourGraph:
    """Graph over ``data`` plus ``y_new`` (site ``N``), same ``k`` and rule.

    Equal to rebuilding from scratch on the concatenated points; existing
    neighbour sets change wherever the new site displaces a neighbour.
    """
    y = data.check_point(y_new)
    if graph.n_sites != data.n:
        raise InputError("graph and dataset disagree on the number of sites")
    order = NeighbourIndex(data.points).augmented_order(y)
    return _graph_from_order(order, graph.k, graph.rule)
