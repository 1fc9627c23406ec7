"""Probabilistic k-nearest-neighbour classification with model-order averaging.

The probabilistic kNN model treats class labels as a Markov random field on
the kNN graph. :mod:`pknn.korea` approximates the posterior over the
neighbour count ``K`` with per-``K`` Laplace fits of ``beta`` and averages
predictions over ``(K, beta)``; :mod:`pknn.mcmc` samples the same posterior
for reference.
"""

from .dataset import (
    LabeledDataset,
    NeighbourGraph,
    NeighbourIndex,
    NeighbourRule,
    build_neighbour_graph,
    insert_test_point,
)
from .errors import InputError, NumericalError, PknnError
from .knn import KnnConfig, knn_classify
from .korea import (
    GammaPrior,
    KoreaConfig,
    LaplaceFit,
    OrderPosterior,
    PredictiveResult,
    classify,
    classify_batch,
    order_posterior,
)
from .likelihood import (
    AugmentedProblem,
    InteractionParams,
    conditional_class_posterior,
    log_pseudo_likelihood,
    site_log_probability,
)
from .mcmc import ChainTrace, McmcConfig, run_chain

__version__ = "0.1.0"
