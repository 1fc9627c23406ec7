"""Four-fold cross-validation of kNN against PKNN on the bundled datasets.

Fold splits are seeded, so rerunning prints the same F-measures. Timings are
wall-clock and vary by machine.

Run with ``python gallery/03_cross_validation.py [dataset ...]``.
"""

import sys

from pknn.harness import ExperimentConfig, run_benchmark

names = sys.argv[1:] or ["iris", "wine"]

for name in names:
    cfg = ExperimentConfig(
        name,
        methods=("knn", "pknn-fixed", "korea-average", "korea-optimal"),
        rules=("asymmetric", "boltzmann", "boltzmann2"),
        folds=4,
        seed=0,
        standardize=True,
    )
    report = run_benchmark(cfg)
    print(f"== {name} ==")
    print(report.format_table())
    print()
