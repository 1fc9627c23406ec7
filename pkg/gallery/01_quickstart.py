"""Classify one held-out flower with plain kNN and with model-averaged PKNN.

Run with ``python gallery/01_quickstart.py``.
"""

import numpy as np

from pknn import KnnConfig, KoreaConfig, classify, knn_classify
from pknn.harness import load_builtin, standardize_dataset

data = load_builtin("iris")

# Hold out one row per class and train on the rest. Features are z-scored
# with training statistics only.
held = np.array([0, 50, 100])
rest = np.setdiff1d(np.arange(data.n), held)
train, test = standardize_dataset(data.subset(rest), data.subset(held))

for y, truth in zip(test.points, test.labels):
    vote = knn_classify(train, y, KnnConfig(k=5))
    res = classify(train, y, KoreaConfig(k_max=15, rule="boltzmann2"))
    order = res.order
    print(f"true class {data.class_names[truth]!r}")
    print(f"  5-NN vote          -> {data.class_names[vote]!r}")
    print(f"  averaged PKNN      -> {data.class_names[res.predicted]!r}, "
          f"p = {np.round(res.class_probs, 3)}")
    print(f"  best single order  -> K* = {order.k_star}, "
          f"beta mode {order.fits[order.k_star - 1].mode:.2f}, "
          f"p = {np.round(res.optimal_probs, 3)}")

    # Where the posterior over K puts its mass.
    top = np.argsort(order.weights)[::-1][:3]
    print("  heaviest orders    ->", ", ".join(f"K={j + 1}: {order.weights[j]:.2f}" for j in top))
