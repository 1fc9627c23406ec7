"""Data loading, cross-validation and the benchmark protocol.

Methods compared by :func:`run_benchmark`:

``knn``
    majority vote, ``K`` picked by inner 4-fold validation accuracy.
``pknn-fixed``
    probabilistic kNN at one ``K`` picked by inner validation, with ``beta``
    fixed at the Laplace mode of the training-data posterior for that ``K``.
``korea-average`` / ``korea-optimal``
    model-averaged prediction and the prediction at ``(K*, beta mode)``,
    both from the same per-point :class:`~pknn.korea.PredictiveResult`.
``mcmc``
    joint Metropolis-Hastings chain per test point; the most frequent
    sampled label after burn-in.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import LabeledDataset, NeighbourIndex, NeighbourRule
from .errors import InputError
from .knn import query_neighbours
from .korea import (
    GammaPrior,
    KoreaConfig,
    classify,
    default_k_max,
    fit_laplace,
)
from .likelihood import AugmentedProblem, SiteTerms, agreement_scores
from .mcmc import McmcConfig, make_rng, run_chain
from .metrics import DensityGrid, bin_to_grid, f_measure

__all__ = [
    "BUILTIN_DATASETS",
    "METHODS",
    "ExperimentConfig",
    "BenchmarkReport",
    "load_csv",
    "load_builtin",
    "load_dataset",
    "standardize",
    "standardize_dataset",
    "kfold_split",
    "run_benchmark",
    "dump_posterior",
    "write_density_csv",
    "read_density_csv",
]

BUILTIN_DATASETS = ("crabs", "fglass", "iris", "wine")
METHODS = ("knn", "pknn-fixed", "korea-average", "korea-optimal", "mcmc")


def _parse_rows(rows, has_header, label_column, source):
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{source}: no data rows")
    if has_header is None:
        first = rows[0]
        has_header = not all(_is_number(c) for i, c in enumerate(first)
                             if i != _column_index(label_column, first, len(first)))
    header = rows[0] if has_header else None
    body = rows[1:] if has_header else rows
    if not body:
        raise InputError(f"{source}: no data rows")
    width = len(body[0])
    if width < 2:
        raise InputError(f"{source}: need at least one feature and one label column")
    col = _column_index(label_column, header, width)
    points, names, labels = [], {}, []
    for lineno, row in enumerate(body, start=2 if has_header else 1):
        if len(row) != width:
            raise InputError(f"{source}: row {lineno} has {len(row)} fields, expected {width}")
        feats = row[:col] + row[col + 1:]
        try:
            points.append([float(v) for v in feats])
        except ValueError:
            raise InputError(f"{source}: non-numeric feature in row {lineno}") from None
        lab = row[col].strip()
        labels.append(names.setdefault(lab, len(names)))
    return np.array(points), np.array(labels), tuple(names)


def _is_number(s) -> bool:
    try:
        float(s)
    except (TypeError, ValueError):
        return False
    return True


def _column_index(label_column, header, width) -> int:
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if not header or label_column not in header:
            raise InputError(f"unknown label column {label_column!r}")
        return list(header).index(label_column)
    i = int(label_column)
    if not -width <= i < width:
        raise InputError(f"label column {i} out of range for {width} columns")
    return i % width


def load_csv(path, has_header: bool | None = None, label_column="-1",
             standardize: bool = False, delimiter: str = ",") -> LabeledDataset:
    """Read a labelled dataset from CSV.

    Labels are mapped to 0-based indices in order of first appearance.
    ``has_header=None`` sniffs the first row. ``label_column`` is a column
    name or a (possibly negative) index; the default is the last column.
    ``standardize`` z-scores every feature with statistics of this file.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    points, labels, names = _parse_rows(
        csv.reader(io.StringIO(text), delimiter=delimiter), has_header, label_column, str(path)
    )
    data = LabeledDataset(points, labels, len(names), names)
    if standardize:
        data = standardize_dataset(data, data)[0]
    return data


def load_builtin(name: str) -> LabeledDataset:
    """One of the bundled benchmark datasets (see ``BUILTIN_DATASETS``)."""
    if name not in BUILTIN_DATASETS:
        raise InputError(f"unknown builtin dataset {name!r}")
    text = resources.files("pknn.data").joinpath(f"{name}.csv").read_text()
    points, labels, names = _parse_rows(
        csv.reader(io.StringIO(text)), True, "label", name
    )
    return LabeledDataset(points, labels, len(names), names)


def load_dataset(source, **options) -> LabeledDataset:
    """A CSV path, or the name of a bundled dataset.

    ``options`` go to :func:`load_csv`; for bundled data only
    ``standardize`` is honoured.
    """
    if isinstance(source, str) and source in BUILTIN_DATASETS and not os.path.exists(source):
        data = load_builtin(source)
        if options.get("standardize"):
            data = standardize_dataset(data, data)[0]
        return data
    return load_csv(source, **options)


def standardize(train_points, *others):
    """Z-score ``train_points`` and ``others`` with the training statistics.

    Constant features are centred but not scaled.
    """
    train_points = np.asarray(train_points, dtype=float)
    mean = train_points.mean(axis=0)
    std = train_points.std(axis=0)
    std[std == 0] = 1.0
    return tuple((np.asarray(x, dtype=float) - mean) / std for x in (train_points, *others))


def standardize_dataset(train: LabeledDataset, *others: LabeledDataset):
    scaled = standardize(train.points, *(o.points for o in others))
    return tuple(
        LabeledDataset(p, d.labels, d.class_count, d.class_names)
        for p, d in zip(scaled, (train, *others))
    )


def kfold_split(n: int, folds: int, seed=0):
    """Seeded shuffle, then contiguous folds whose sizes differ by at most one."""
    if folds < 1 or folds > n:
        raise InputError(f"cannot split {n} items into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    out = []
    for i, test in enumerate(parts):
        train = np.concatenate([p for j, p in enumerate(parts) if j != i])
        out.append((np.sort(train), np.sort(test)))
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark run over a dataset.

    ``data`` is a CSV path or a bundled dataset name.
    """

    data: str
    methods: tuple[str, ...] = ("knn", "korea-average")
    rules: tuple[NeighbourRule, ...] = (NeighbourRule.ASYMMETRIC,)
    k_max: int | None = None
    beta_max: float = 20.0
    prior_shape: float = 2.0
    prior_scale: float = 10.0
    folds: int = 4
    inner_folds: int = 4
    seed: int = 0
    mcmc_iterations: int = 10000
    mcmc_burn_in: int | None = None
    standardize: bool = False
    label_column: str = "-1"
    max_features: int | None = None
    f_average: str = "macro"
    mcmc_scale_is_variance: bool = True

    def __post_init__(self):
        methods = tuple(self.methods)
        for m in methods:
            if m not in METHODS:
                raise InputError(f"unknown method {m!r}; choose from {METHODS}")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "rules", tuple(NeighbourRule.parse(r) for r in self.rules))
        if self.folds < 2:
            raise InputError("folds must be >= 2")
        if self.inner_folds < 2:
            raise InputError("inner_folds must be >= 2")
        if self.k_max is not None and self.k_max < 1:
            raise InputError("k_max must be >= 1")
        if not self.beta_max > 0:
            raise InputError("beta_max must be positive")
        if self.mcmc_iterations < 1:
            raise InputError("mcmc_iterations must be >= 1")
        if self.f_average not in ("macro", "micro"):
            raise InputError("f_average must be 'macro' or 'micro'")
        GammaPrior(self.prior_shape, self.prior_scale)

    @property
    def prior(self) -> GammaPrior:
        return GammaPrior(self.prior_shape, self.prior_scale)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["rules"] = [r.value for r in self.rules]
        return d

    def load(self) -> LabeledDataset:
        data = load_dataset(self.data, label_column=self.label_column)
        if self.max_features is not None and data.dim > self.max_features:
            cols = np.linspace(0, data.dim - 1, self.max_features).round().astype(int)
            data = LabeledDataset(data.points[:, cols], data.labels, data.class_count,
                                  data.class_names)
        return data


# ---------------------------------------------------------------------------
# per-method predictors


def _knn_votes_all_k(train: LabeledDataset, tests, k_values, rule, index):
    """Predictions for every ``k`` in ``k_values``; shape ``(len(k_values), len(tests))``."""
    out = np.empty((len(k_values), len(tests)), dtype=np.int64)
    for t, y in enumerate(tests):
        order = index.augmented_order(y)
        for a, k in enumerate(k_values):
            ne = query_neighbours(order, k, rule)
            votes = np.bincount(train.labels[ne], minlength=train.class_count)
            out[a, t] = np.argmax(votes)
    return out


def _inner_select(train: LabeledDataset, k_values, inner_folds, seed, predict_all_k):
    """``k`` with the best pooled inner-validation accuracy (ties: smaller ``k``)."""
    splits = kfold_split(train.n, inner_folds, seed)
    smallest = min(len(tr) for tr, _ in splits)
    k_values = [k for k in k_values if k <= smallest - 1] or [1]
    correct = np.zeros(len(k_values))
    for tr, va in splits:
        preds = predict_all_k(train.subset(tr), train.points[va], k_values)
        correct += (preds == train.labels[va][None, :]).sum(axis=1)
    return k_values[int(np.argmax(correct))]


def _training_beta_mode(train: LabeledDataset, k: int, rule, prior, beta_max):
    index = NeighbourIndex(train.points)
    graph = index.graph(k, rule)
    terms = SiteTerms(agreement_scores(train.labels, graph, train.class_count), train.labels)
    return fit_laplace(lambda b: terms.log_pl(b / k) + prior.logpdf(b), beta_max, k).mode


def _pknn_predict_all_k(train, tests, k_values, rule, prior, beta_max):
    index = NeighbourIndex(train.points)
    betas = [_training_beta_mode(train, k, rule, prior, beta_max) for k in k_values]
    out = np.empty((len(k_values), len(tests)), dtype=np.int64)
    for t, y in enumerate(tests):
        problem = AugmentedProblem(train, y, rule, index=index)
        for a, (k, b) in enumerate(zip(k_values, betas)):
            out[a, t] = np.argmax(problem.class_log_odds(k, b))
    return out


def _k_values(config: ExperimentConfig, n_train: int):
    k_max = config.k_max if config.k_max is not None else default_k_max(n_train)
    return list(range(1, min(k_max, n_train - 1) + 1))


def _predict(method, train, test_points, rule, config, fold_seed, cache):
    prior = config.prior
    if method == "knn":
        ks = _k_values(config, train.n)

        def all_k(tr, pts, kv):
            return _knn_votes_all_k(tr, pts, kv, rule, NeighbourIndex(tr.points))

        k = _inner_select(train, ks, config.inner_folds, fold_seed, all_k)
        return all_k(train, test_points, [k])[0]
    if method == "pknn-fixed":
        ks = _k_values(config, train.n)

        def all_k(tr, pts, kv):
            return _pknn_predict_all_k(tr, pts, kv, rule, prior, config.beta_max)

        k = _inner_select(train, ks, config.inner_folds, fold_seed, all_k)
        return all_k(train, test_points, [k])[0]
    if method in ("korea-average", "korea-optimal"):
        key = ("korea", rule)
        if key not in cache:
            kcfg = KoreaConfig(config.k_max, rule, prior, config.beta_max)
            index = NeighbourIndex(train.points)
            cache[key] = [
                classify(train, y, kcfg, problem=AugmentedProblem(train, y, rule, index=index))
                for y in test_points
            ]
        results = cache[key]
        attr = "predicted" if method == "korea-average" else "predicted_optimal"
        return np.array([getattr(r, attr) for r in results])
    if method == "mcmc":
        mcfg = McmcConfig(config.mcmc_iterations, config.mcmc_burn_in, fold_seed,
                          config.k_max, rule, prior, config.beta_max,
                          scale_is_variance=config.mcmc_scale_is_variance)
        index = NeighbourIndex(train.points)
        preds = []
        for t, y in enumerate(test_points):
            rng = make_rng([fold_seed, t])
            trace = run_chain(train, y, mcfg, rng=rng, index=index)
            preds.append(int(np.argmax(trace.z_distribution())))
        return np.array(preds)
    raise InputError(f"unknown method {method!r}")


def _timing_key(method: str) -> str:
    return "korea" if method.startswith("korea") else method


@dataclass
class BenchmarkReport:
    """Per-fold F-measures plus mean wall-clock seconds per method.

    Timings are kept out of :meth:`to_json` unless asked for, so the
    structured report is byte-identical across reruns with the same seed.
    """

    config: dict
    records: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def summary(self) -> list[dict]:
        groups: dict[tuple, list] = {}
        for r in self.records:
            groups.setdefault((r["method"], r["rule"]), []).append(r["f_measure"])
        out = []
        for (method, rule), vals in groups.items():
            v = np.array(vals)
            std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
            out.append({"method": method, "rule": rule, "mean": float(v.mean()),
                        "std": std, "folds": len(v)})
        return out

    def mean_f(self, method: str, rule) -> float:
        rule = NeighbourRule.parse(rule).value
        for s in self.summary():
            if s["method"] == method and s["rule"] == rule:
                return s["mean"]
        raise KeyError((method, rule))

    def mean_seconds(self) -> dict:
        return {m: float(np.mean(v)) for m, v in self.timings.items()}

    def to_json(self, include_timings: bool = False) -> str:
        doc = {"config": self.config, "records": self.records, "summary": self.summary()}
        if include_timings:
            doc["mean_seconds_per_fold"] = self.mean_seconds()
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkReport":
        doc = json.loads(text)
        return cls(doc["config"], doc["records"])

    def format_table(self) -> str:
        lines = [f"{'method':<15}{'rule':<12}{'F-measure':>18}"]
        for s in self.summary():
            lines.append(f"{s['method']:<15}{s['rule']:<12}"
                         f"{s['mean']:>10.3f} +/- {s['std']:.3f}")
        if self.timings:
            lines.append("")
            lines.append(f"{'method':<15}{'seconds/fold':>14}")
            for m, sec in self.mean_seconds().items():
                lines.append(f"{m:<15}{sec:>14.3f}")
        return "\n".join(lines)


def run_benchmark(config: ExperimentConfig, data: LabeledDataset | None = None) -> BenchmarkReport:
    """Outer ``config.folds``-fold cross-validation of every method and rule."""
    data = data if data is not None else config.load()
    report = BenchmarkReport(config.to_dict())
    splits = kfold_split(data.n, config.folds, config.seed)
    for fold, (tr, te) in enumerate(splits):
        train, test = data.subset(tr), data.subset(te)
        if config.standardize:
            train, test = standardize_dataset(train, test)
        fold_seed = config.seed * 1000 + fold
        for rule in config.rules:
            cache: dict = {}
            spent: dict[str, float] = {}
            for method in config.methods:
                t0 = time.perf_counter()
                try:
                    pred = _predict(method, train, test.points, rule, config, fold_seed, cache)
                except InputError as exc:
                    raise InputError(f"{config.data}, fold {fold}, {method}: {exc}") from exc
                key = _timing_key(method)
                spent[key] = spent.get(key, 0.0) + time.perf_counter() - t0
                report.records.append({
                    "fold": fold,
                    "method": method,
                    "rule": rule.value,
                    "n_test": int(test.n),
                    "f_measure": f_measure(pred, test.labels, data.class_count, config.f_average),
                })
            for key, sec in spent.items():
                report.timings.setdefault(key, []).append(sec)
    return report


# ---------------------------------------------------------------------------
# density dumps


def write_density_csv(path, grid: DensityGrid) -> None:
    v = grid.values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if v.ndim == 1:
            w.writerow(["k", "weight"])
            ks = grid.axes[0] if grid.axes else np.arange(1, v.size + 1)
            for k, x in zip(ks, v):
                w.writerow([int(k), repr(float(x))])
        else:
            w.writerow(["k", "beta", "weight"])
            ks, betas = grid.axes
            for a, k in enumerate(ks):
                for m, b in enumerate(betas):
                    w.writerow([int(k), repr(float(b)), repr(float(v[a, m]))])


def read_density_csv(path) -> DensityGrid:
    """Inverse of :func:`write_density_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty density file")
    header, body = rows[0], rows[1:]
    try:
        if header == ["k", "weight"]:
            ks = np.array([int(r[0]) for r in body])
            return DensityGrid(np.array([float(r[1]) for r in body]), (ks,))
        if header == ["k", "beta", "weight"]:
            ks = sorted({int(r[0]) for r in body})
            betas = sorted({float(r[1]) for r in body})
            v = np.zeros((len(ks), len(betas)))
            ki = {k: i for i, k in enumerate(ks)}
            bi = {b: i for i, b in enumerate(betas)}
            for r in body:
                v[ki[int(r[0])], bi[float(r[1])]] = float(r[2])
            return DensityGrid(v, (np.array(ks), np.array(betas)))
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed density row ({exc})") from None
    raise InputError(f"{path}: unrecognised header {header}")


def _write_long(path, method, k_grid: DensityGrid, kb_grid: DensityGrid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "panel", "k", "beta", "weight"])
        for k, x in zip(k_grid.axes[0], k_grid.values):
            w.writerow([method, "k", int(k), "", repr(float(x))])
        ks, betas = kb_grid.axes
        for a, k in enumerate(ks):
            for m, b in enumerate(betas):
                w.writerow([method, "k_beta", int(k), repr(float(b)),
                            repr(float(kb_grid.values[a, m]))])


def dump_posterior(config: ExperimentConfig, test_index: int, out_dir, method: str = "korea",
                   rule=None, data: LabeledDataset | None = None) -> dict:
    """Hold out row ``test_index`` and write its posterior densities to ``out_dir``.

    Writes ``{method}_k.csv`` (``k,weight``), ``{method}_k_beta.csv``
    (``k,beta,weight``) and ``{method}_long.csv``. MCMC samples are binned
    onto the ``beta`` grid KOREA builds for the same point. Returns the
    written paths keyed by kind.
    """
    if method not in ("korea", "mcmc"):
        raise InputError("method must be 'korea' or 'mcmc'")
    data = data if data is not None else config.load()
    if not 0 <= test_index < data.n:
        raise InputError(f"test index {test_index} out of range 0..{data.n - 1}")
    rule = NeighbourRule.parse(rule or config.rules[0])
    keep = np.array([i for i in range(data.n) if i != test_index])
    train, test = data.subset(keep), data.subset([test_index])
    if config.standardize:
        train, test = standardize_dataset(train, test)
    y = test.points[0]
    result = classify(train, y, KoreaConfig(config.k_max, rule, config.prior, config.beta_max))
    k_axis = np.arange(1, result.order.k_max + 1)
    betas = result.grid.points
    if method == "korea":
        k_grid = DensityGrid(result.order.weights, (k_axis,))
        kb_grid = DensityGrid(result.mixture_weights.T, (k_axis, betas))
    else:
        mcfg = McmcConfig(config.mcmc_iterations, config.mcmc_burn_in, config.seed,
                          result.order.k_max, rule, config.prior, config.beta_max,
                          scale_is_variance=config.mcmc_scale_is_variance)
        trace = run_chain(train, y, mcfg)
        k_grid = DensityGrid(trace.k_distribution(), (k_axis,))
        kept_k = trace.k[trace.burn_in:]
        kept_b = trace.beta[trace.burn_in:]
        joint = np.zeros((k_axis.size, betas.size))
        for a, k in enumerate(k_axis):
            sel = kept_k == k
            if sel.any():
                joint[a] = bin_to_grid(kept_b[sel], betas) * sel.sum()
        joint /= joint.sum()
        kb_grid = DensityGrid(joint, (k_axis, betas))
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "k": out / f"{method}_k.csv",
            "k_beta": out / f"{method}_k_beta.csv",
            "long": out / f"{method}_long.csv",
        }
        write_density_csv(paths["k"], k_grid)
        write_density_csv(paths["k_beta"], kb_grid)
        _write_long(paths["long"], method, k_grid, kb_grid)
    except OSError as exc:
        raise OSError(f"cannot write posterior dump to {out}: {exc}") from exc
    return paths
