"""Command-line entry point: ``pknn {classify,benchmark,posterior,compare}``.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .dataset import NeighbourRule
from .errors import InputError, NumericalError
from .harness import (
    METHODS,
    ExperimentConfig,
    _is_number,
    dump_posterior,
    load_dataset,
    read_density_csv,
    run_benchmark,
    standardize,
)
from .korea import GammaPrior, KoreaConfig, classify
from .knn import KnnConfig, knn_classify
from .mcmc import McmcConfig, run_chain
from .metrics import density_kld, density_psnr, density_rmse, density_ssim

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

RULES = [r.value for r in NeighbourRule]


def _model_args(p):
    p.add_argument("--rule", default="asymmetric", choices=RULES)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--beta-max", type=float, default=20.0)
    p.add_argument("--prior-shape", type=float, default=2.0)
    p.add_argument("--prior-scale", type=float, default=10.0)
    p.add_argument("--standardize", action="store_true",
                   help="z-score features with training statistics")
    p.add_argument("--label-column", default="-1",
                   help="label column name or index (default: last)")
    p.add_argument("--iterations", type=int, default=10000, help="MCMC iterations")
    p.add_argument("--proposal-sd", action="store_true",
                   help="read the 0.1 beta proposal scale as a standard deviation, not a variance")
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true",
                   help="fail (exit 2) when a Laplace fit had to fall back to quadrature")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pknn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify the rows of a test file")
    p.add_argument("--data", required=True, help="training CSV or bundled dataset name")
    p.add_argument("--test", required=True, help="CSV of test feature vectors")
    p.add_argument("--method", default="korea-average",
                   choices=["knn", "korea-average", "korea-optimal", "mcmc"])
    p.add_argument("--k", type=int, default=None, help="neighbours for --method knn")
    _model_args(p)

    p = sub.add_parser("benchmark", help="cross-validated F-measures and timings")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--methods", default="knn,korea-average",
                   help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--rules", default="asymmetric", help="comma-separated neighbour rules")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--timings", default=None, help="write mean seconds per fold here")
    p.add_argument("--max-features", type=int, default=None)
    p.add_argument("--f-average", default="macro", choices=["macro", "micro"])
    _model_args(p)

    p = sub.add_parser("posterior", help="dump K and (K, beta) posteriors for one point")
    p.add_argument("--data", required=True)
    p.add_argument("--test-index", type=int, required=True)
    p.add_argument("--method", default="korea", choices=["korea", "mcmc"])
    p.add_argument("--out", required=True, help="output directory")
    _model_args(p)

    p = sub.add_parser("compare", help="similarity metrics between two density dumps")
    p.add_argument("--korea-dump", required=True)
    p.add_argument("--mcmc-dump", required=True)
    p.add_argument("--metrics", default="rmse,kld,psnr,ssim")
    p.add_argument("--reverse-kld", action="store_true", help="report KL(MCMC || KOREA)")
    return parser


def _experiment(args, methods=("korea-average",), rules=None) -> ExperimentConfig:
    return ExperimentConfig(
        data=args.data,
        methods=tuple(methods),
        rules=tuple(rules or (args.rule,)),
        k_max=args.k_max,
        beta_max=args.beta_max,
        prior_shape=args.prior_shape,
        prior_scale=args.prior_scale,
        folds=getattr(args, "folds", 4),
        seed=args.seed,
        mcmc_iterations=args.iterations,
        mcmc_burn_in=args.burn_in,
        standardize=args.standardize,
        label_column=args.label_column,
        max_features=getattr(args, "max_features", None),
        f_average=getattr(args, "f_average", "macro"),
        mcmc_scale_is_variance=not args.proposal_sd,
    )


def _features(row, dim, label_column):
    """Drop the label cell when a test row carries one."""
    if len(row) != dim + 1:
        return row
    col = int(label_column) % len(row) if label_column.lstrip("-").isdigit() else len(row) - 1
    return row[:col] + row[col + 1:]


def _read_test_points(path, dim, label_column):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    start = 1
    if rows and not all(_is_number(v) for v in _features(rows[0], dim, label_column)):
        rows, start = rows[1:], 2
    if not rows:
        raise InputError(f"{path}: no test rows")
    out = []
    for lineno, row in enumerate(rows, start=start):
        row = _features(row, dim, label_column)
        if len(row) != dim:
            raise InputError(f"{path}: row {lineno} has {len(row)} features, expected {dim}")
        try:
            out.append([float(v) for v in row])
        except ValueError:
            raise InputError(f"{path}: non-numeric feature in row {lineno}") from None
    return np.array(out)


def cmd_classify(args, out) -> int:
    train = load_dataset(args.data, label_column=args.label_column)
    tests = _read_test_points(args.test, train.dim, args.label_column)
    if args.standardize:
        train_pts, tests = standardize(train.points, tests)
        train = type(train)(train_pts, train.labels, train.class_count, train.class_names)
    names = train.class_names or tuple(str(c) for c in range(train.class_count))
    w = csv.writer(out)
    w.writerow(["row", "predicted"] + [f"p_{n}" for n in names])
    prior = GammaPrior(args.prior_shape, args.prior_scale)
    for i, y in enumerate(tests):
        if args.method == "knn":
            k = args.k or 1
            c = knn_classify(train, y, KnnConfig(k, args.rule))
            probs = np.eye(train.class_count)[c]
        elif args.method == "mcmc":
            cfg = McmcConfig(args.iterations, args.burn_in, args.seed + i, args.k_max,
                             args.rule, prior, args.beta_max,
                             scale_is_variance=not args.proposal_sd)
            probs = run_chain(train, y, cfg).z_distribution()
        else:
            res = classify(train, y, KoreaConfig(args.k_max, args.rule, prior, args.beta_max))
            if args.strict and res.order.flagged:
                raise NumericalError(f"row {i}: Laplace fit fell back to quadrature")
            probs = res.class_probs if args.method == "korea-average" else res.optimal_probs
        c = int(np.argmax(probs))
        w.writerow([i, names[c]] + [repr(float(p)) for p in probs])
    return EXIT_OK


def cmd_benchmark(args, out) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rules = [r.strip() for r in args.rules.split(",") if r.strip()]
    config = _experiment(args, methods, rules)
    report = run_benchmark(config)
    out.write(report.format_table() + "\n")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json())
    if args.timings:
        with open(args.timings, "w") as fh:
            json.dump(report.mean_seconds(), fh, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_posterior(args, out) -> int:
    config = _experiment(args)
    paths = dump_posterior(config, args.test_index, args.out, method=args.method)
    for kind, path in paths.items():
        out.write(f"{kind}\t{path}\n")
    return EXIT_OK


def cmd_compare(args, out) -> int:
    p = read_density_csv(args.korea_dump)
    q = read_density_csv(args.mcmc_dump)
    funcs = {
        "rmse": density_rmse,
        "kld": (lambda a, b: density_kld(b, a)) if args.reverse_kld else density_kld,
        "psnr": density_psnr,
        "ssim": density_ssim,
    }
    for name in [m.strip() for m in args.metrics.split(",") if m.strip()]:
        if name not in funcs:
            raise InputError(f"unknown metric {name!r}")
        out.write(f"{name}\t{funcs[name](p, q)!r}\n")
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "benchmark": cmd_benchmark,
    "posterior": cmd_posterior,
    "compare": cmd_compare,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except NumericalError as exc:
        print(f"pknn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as exc:
        print(f"pknn: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"pknn: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
