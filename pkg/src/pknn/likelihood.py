"""Pseudo-likelihood of the probabilistic kNN model.

Each site ``i`` contributes

    exp{(beta/K) S_i(z_i)} / sum_c exp{(beta/K) S_i(c)}

where ``S_i(c)`` counts the neighbours of ``i`` carrying label ``c``. The
neighbour rule decides which sites count (see
:meth:`NeighbourGraph.interaction_matrix`). Everything is evaluated in log
space; ``beta`` may be a scalar or an array of values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import (
    LabeledDataset,
    NeighbourGraph,
    NeighbourIndex,
    NeighbourRule,
    _graph_from_order,
)
from .errors import InputError

__all__ = [
    "InteractionParams",
    "SiteTerms",
    "JointPseudoLikelihood",
    "AugmentedProblem",
    "agreement_scores",
    "site_log_probability",
    "log_pseudo_likelihood",
    "conditional_class_posterior",
]


@dataclass(frozen=True)
class InteractionParams:
    """Interaction strength ``beta`` and neighbour count ``k``.

    ``beta == 0`` is accepted for diagnostics; it makes every site uniform.
    """

    beta: float
    k: int

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise InputError(f"beta must be finite and >= 0, got {self.beta}")
        if int(self.k) != self.k or self.k < 1:
            raise InputError(f"k must be a positive integer, got {self.k}")


def _onehot(labels: np.ndarray, class_count: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], class_count), dtype=np.int64)
    out[np.arange(labels.shape[0]), labels] = 1
    return out


def agreement_scores(labels, graph: NeighbourGraph, class_count: int) -> np.ndarray:
    """Unscaled agreement counts ``S_i(c)``, shape ``(n_sites, C)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (graph.n_sites,):
        raise InputError(
            f"expected {graph.n_sites} labels, got shape {labels.shape}"
        )
    return graph.interaction_matrix() @ _onehot(labels, class_count)


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True)))[..., 0]


def _class_count(labels, class_count):
    return int(class_count) if class_count else int(np.max(labels)) + 1


def site_log_probability(labels, site: int, graph: NeighbourGraph,
                         params: InteractionParams, class_count: int | None = None) -> float:
    """Log full-conditional probability of ``labels[site]`` at ``site``."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0 <= site < graph.n_sites:
        raise InputError(f"site {site} out of range")
    C = _class_count(labels, class_count)
    w = graph.interaction_matrix()[site]
    scores = np.bincount(labels, weights=w, minlength=C)[:C]
    x = (params.beta / graph.k) * scores
    return float(x[labels[site]] - _logsumexp_rows(x))


def log_pseudo_likelihood(labels, graph: NeighbourGraph, params: InteractionParams,
                          class_count: int | None = None) -> float:
    """Sum of :func:`site_log_probability` over every site of ``graph``."""
    labels = np.asarray(labels, dtype=np.int64)
    C = _class_count(labels, class_count)
    terms = SiteTerms(agreement_scores(labels, graph, C), labels)
    return float(terms.log_pl(params.beta / graph.k))


class SiteTerms:
    """Sites grouped by identical (scores, own label) for fast evaluation.

    ``log_pl(b)`` returns ``sum_i b S_i(z_i) - logsumexp_c b S_i(c)`` for a
    scalar or an array of scaled strengths ``b = beta / K``.
    """

    def __init__(self, scores: np.ndarray, labels: np.ndarray):
        scores = np.asarray(scores, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        if scores.shape[0] == 0:
            self.scores = np.zeros((0, max(scores.shape[1], 1)))
            self.own = np.zeros(0)
            self.weights = np.zeros(0)
            return
        key = np.concatenate([scores, labels[:, None].astype(float)], axis=1)
        uniq, counts = np.unique(key, axis=0, return_counts=True)
        self.scores = uniq[:, :-1]
        own_label = uniq[:, -1].astype(np.int64)
        self.own = self.scores[np.arange(len(own_label)), own_label]
        self.weights = counts.astype(float)

    def log_pl(self, b):
        b = np.asarray(b, dtype=float)
        if self.weights.size == 0:
            return np.zeros(b.shape)
        x = b[..., None, None] * self.scores
        per_site = b[..., None] * self.own - _logsumexp_rows(x)
        return per_site @ self.weights


def _unique_rows(rows: np.ndarray):
    """``np.unique(rows, axis=0, return_inverse=True)`` for small nonnegative ints."""
    base = int(rows.max()) + 1 if rows.size else 1
    if rows.shape[1] * math.log2(base) < 62:
        key = rows @ (base ** np.arange(rows.shape[1], dtype=np.int64))
        _, first, inverse = np.unique(key, return_index=True, return_inverse=True)
        return rows[first], inverse.reshape(-1)
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


class JointPseudoLikelihood:
    """``log p(z' = c, z | beta, K)`` for every class ``c`` of the test site.

    ``graph`` covers the ``N`` training sites plus the test site, which must
    be the last site. Training labels are fixed; only the test label varies.
    Sites are grouped into distinct (scores, own label) rows and a
    ``(rows, C)`` multiplicity matrix says how often each row occurs when
    the test label is ``c``.
    """

    def __init__(self, train_labels, graph: NeighbourGraph, class_count: int):
        labels = np.asarray(train_labels, dtype=np.int64)
        n = labels.shape[0]
        if graph.n_sites != n + 1:
            raise InputError("graph must contain the training sites plus one test site")
        self.k = graph.k
        self.class_count = C = int(class_count)
        W = graph.interaction_matrix()
        full = np.append(labels, 0)
        base = W @ _onehot(full, C)
        base[:, 0] -= W[:, n]
        touched = W[:, n] != 0
        touched[n] = True
        idx = np.flatnonzero(touched)
        m = idx.size
        # block c holds the touched rows when the test site carries label c
        scores = np.repeat(base[idx][None], C, axis=0)
        scores[np.arange(C), :, np.arange(C)] += W[idx, n]
        lab = np.repeat(full[idx][None], C, axis=0)
        lab[:, idx == n] = np.arange(C)[:, None]
        rows = np.concatenate([
            np.column_stack([base[~touched], full[~touched]]),
            np.concatenate([scores, lab[..., None]], axis=2).reshape(C * m, C + 1),
        ])
        # column C collects rows shared by every test label
        owner = np.concatenate([np.full(n + 1 - m, C), np.repeat(np.arange(C), m)])
        uniq, inverse = _unique_rows(rows)
        counts = np.zeros((uniq.shape[0], C + 1))
        np.add.at(counts, (inverse, owner), 1.0)
        mult = counts[:, :C] + counts[:, C:]
        self.scores = uniq[:, :-1].astype(float)
        own = uniq[:, -1].astype(np.int64)
        self.own = self.scores[np.arange(len(own)), own]
        self.multiplicity = mult
        self._top = self.scores.max(axis=1)
        self._centred = self.scores - self._top[:, None]

    def log_joint(self, beta) -> np.ndarray:
        """Array of shape ``beta.shape + (C,)``."""
        b = np.asarray(beta, dtype=float) / self.k
        x = b[..., None, None] * self._centred
        lse = b[..., None] * self._top + np.log(np.exp(x).sum(axis=-1))
        return (b[..., None] * self.own - lse) @ self.multiplicity

    def log_marginal(self, beta) -> np.ndarray:
        """``log sum_c p(z' = c, z | beta, K)``."""
        return _logsumexp_rows(self.log_joint(beta))

    def class_posterior(self, beta) -> np.ndarray:
        lj = self.log_joint(beta)
        p = np.exp(lj - lj.max(axis=-1, keepdims=True))
        return p / p.sum(axis=-1, keepdims=True)


class AugmentedProblem:
    """Training data plus one unlabelled test point under a neighbour rule.

    Builds and caches the joint pseudo-likelihood for each ``k`` on the
    ``N + 1``-site graph. Pass a shared ``index`` to reuse the training
    distance ordering across test points.
    """

    def __init__(self, train: LabeledDataset, y_new, rule,
                 index: NeighbourIndex | None = None):
        self.train = train
        self.y_new = train.check_point(y_new)
        self.rule = NeighbourRule.parse(rule)
        if index is None:
            index = NeighbourIndex(train.points)
        self._order = index.augmented_order(self.y_new)
        self._joint: dict[int, JointPseudoLikelihood] = {}

    @property
    def class_count(self) -> int:
        return self.train.class_count

    @property
    def max_k(self) -> int:
        return self.train.n

    def graph(self, k: int) -> NeighbourGraph:
        return _graph_from_order(self._order, k, self.rule)

    def joint(self, k: int) -> JointPseudoLikelihood:
        k = int(k)
        if not 1 <= k <= self.max_k:
            raise InputError(f"k={k} out of range 1..{self.max_k}")
        jp = self._joint.get(k)
        if jp is None:
            jp = JointPseudoLikelihood(self.train.labels, self.graph(k), self.class_count)
            self._joint[k] = jp
        return jp

    def class_log_odds(self, k: int, beta: float) -> np.ndarray:
        """``log p(z' = c, z | beta, k)`` up to a constant shared by all ``c``.

        Only sites whose terms depend on the test label are evaluated, which
        is cheaper than :meth:`joint` when ``beta`` is used once.
        """
        k = int(k)
        if not 1 <= k <= self.max_k:
            raise InputError(f"k={k} out of range 1..{self.max_k}")
        n, C = self.train.n, self.class_count
        W = self.graph(k).interaction_matrix()
        full = np.append(self.train.labels, 0)
        idx = np.union1d(np.flatnonzero(W[:, n]), [n])
        base = W[idx] @ _onehot(full, C)
        base[:, 0] -= W[idx, n]
        # scores[c] are the touched rows when the test site carries label c
        scores = np.repeat(base[None], C, axis=0)
        scores[np.arange(C), :, np.arange(C)] += W[idx, n]
        labels = np.repeat(full[idx][None], C, axis=0)
        labels[:, idx == n] = np.arange(C)[:, None]
        x = (beta / k) * scores
        own = np.take_along_axis(x, labels[..., None], axis=-1)[..., 0]
        return (own - _logsumexp_rows(x)).sum(axis=1)


def conditional_class_posterior(train: LabeledDataset, y_new, params: InteractionParams,
                                rule) -> np.ndarray:
    """``p(z' = c | beta, K, z, y, y')`` for every class ``c``."""
    y = train.check_point(y_new)
    if params.k > train.n:
        raise InputError(f"k={params.k} exceeds {train.n} training points")
    return AugmentedProblem(train, y, rule).joint(params.k).class_posterior(params.beta)
