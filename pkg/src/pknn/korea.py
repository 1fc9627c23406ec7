"""Model-order estimation and model-averaged prediction for probabilistic kNN.

For one test point the engine

1. fits a Gaussian (Laplace) approximation to ``p(beta | Y, K)`` for every
   ``K`` in ``1..k_max``;
2. scores each order by the joint density divided by that Gaussian, both
   evaluated at the mode, giving ``p(K | Y)`` up to a constant;
3. moment-matches the mixture of per-order Gaussians to place an evenly
   spaced ``beta`` grid;
4. averages the conditional class posterior over the ``(beta, K)`` cells,
   weighted by the per-order Gaussian density times the order weight.

Nothing here is random: identical inputs give identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset, NeighbourIndex, NeighbourRule
from .errors import InputError, NumericalError, PknnError
from .likelihood import AugmentedProblem
from .optimize import newton_max

__all__ = [
    "GammaPrior",
    "LaplaceFit",
    "OrderPosterior",
    "BetaGrid",
    "PredictiveResult",
    "KoreaConfig",
    "fit_laplace",
    "laplace_beta_posterior",
    "normalize_order_weights",
    "order_posterior",
    "beta_marginal_moments",
    "build_beta_grid",
    "predictive_mixture",
    "classify",
    "classify_batch",
]

LOG_2PI = math.log(2.0 * math.pi)
GRID_FLOOR = 1e-6


@dataclass(frozen=True)
class GammaPrior:
    """Gamma density on ``beta`` with shape ``a`` and scale ``b``.

    The default ``(2, 10)`` has mean 20 and variance 200.
    """

    shape: float = 2.0
    scale: float = 10.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise InputError("gamma prior shape and scale must be positive")

    @property
    def _log_norm(self) -> float:
        return math.lgamma(self.shape) + self.shape * math.log(self.scale)

    def logpdf(self, beta):
        if np.ndim(beta) == 0:
            b = float(beta)
            if b <= 0:
                return -math.inf
            return (self.shape - 1.0) * math.log(b) - b / self.scale - self._log_norm
        beta = np.asarray(beta, dtype=float)
        if beta.size and beta.min() > 0:
            return (self.shape - 1.0) * np.log(beta) - beta / self.scale - self._log_norm
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (self.shape - 1.0) * np.log(beta) - beta / self.scale - self._log_norm
        return np.where(beta > 0, out, -np.inf)

    @property
    def mode(self) -> float:
        return max(self.shape - 1.0, 0.0) * self.scale


@dataclass(frozen=True)
class LaplaceFit:
    """Gaussian approximation ``N(mode, variance)`` to ``p(beta | Y, K=k)``.

    ``at_boundary`` is set when the maximiser sits on an end of the search
    interval; ``flagged`` when the curvature at the mode was not negative and
    the variance came from quadrature instead.
    """

    k: int
    mode: float
    variance: float
    log_posterior_at_mode: float
    at_boundary: bool = False
    flagged: bool = False

    def log_density(self, beta):
        beta = np.asarray(beta, dtype=float)
        return -0.5 * (LOG_2PI + math.log(self.variance)
                       + (beta - self.mode) ** 2 / self.variance)


def _quadrature_variance(log_target, beta_max: float, n: int = 4001) -> float:
    grid = np.linspace(beta_max / n, beta_max, n)
    lt = np.asarray(log_target(grid), dtype=float)
    w = np.exp(lt - lt.max())
    w /= w.sum()
    mean = float(w @ grid)
    return float(w @ (grid - mean) ** 2)


def fit_laplace(log_target, beta_max: float, k: int = 0, *, grid_points: int = 64,
                tol: float = 1e-10) -> LaplaceFit:
    """Laplace fit of an unnormalised log density on ``(0, beta_max]``.

    ``log_target`` must accept a numpy array of ``beta`` values. A coarse
    scan locates the highest cell, safeguarded Newton refines it, and the
    variance is ``-1 / f''`` at the mode.
    """
    if not beta_max > 0:
        raise InputError("beta_max must be positive")

    def f(x):
        return float(log_target(np.asarray(x, dtype=float)))

    def batch(xs):
        return np.asarray(log_target(np.array(xs, dtype=float)), dtype=float).tolist()

    coarse = beta_max * np.arange(1, grid_points + 1) / grid_points
    values = np.asarray(log_target(coarse), dtype=float)
    if not np.any(np.isfinite(values)):
        raise NumericalError("log target is not finite anywhere on (0, beta_max]")
    i = int(np.nanargmax(np.where(np.isfinite(values), values, -np.inf)))
    lo = coarse[i - 1] if i > 0 else GRID_FLOOR
    hi = coarse[i + 1] if i + 1 < grid_points else beta_max
    mode, fmode, _ = newton_max(f, lo, hi, float(coarse[i]), tol=tol, batch=batch)

    at_boundary = False
    if i == grid_points - 1 and f(beta_max) >= fmode:
        mode, fmode, at_boundary = beta_max, f(beta_max), True
    elif mode - lo <= 1e-8 * (1.0 + mode) and lo == GRID_FLOOR:
        at_boundary = True

    h = 1e-3 * max(mode, 1e-2)
    if at_boundary and mode >= beta_max:
        curv = (f(mode) - 2.0 * f(mode - h) + f(mode - 2.0 * h)) / (h * h)
    else:
        h = min(h, 0.5 * mode)
        fp, fm = batch([mode + h, mode - h])
        curv = (fp - 2.0 * fmode + fm) / (h * h)

    flagged = False
    if curv < 0 and np.isfinite(curv):
        variance = -1.0 / curv
    else:
        variance = _quadrature_variance(log_target, beta_max)
        flagged = True
    return LaplaceFit(int(k), float(mode), float(variance), float(fmode),
                      at_boundary, flagged)


def _log_target(problem: AugmentedProblem, k: int, prior: GammaPrior):
    joint = problem.joint(k)

    def log_target(beta):
        return joint.log_marginal(beta) + prior.logpdf(beta)

    return log_target


def laplace_beta_posterior(train: LabeledDataset, y_new, k: int, rule,
                           prior: GammaPrior | None = None, beta_max: float = 20.0,
                           problem: AugmentedProblem | None = None) -> LaplaceFit:
    """Laplace fit of ``p(beta | z, y, y', K=k)`` with the test label summed out."""
    prior = prior or GammaPrior()
    if problem is None:
        problem = AugmentedProblem(train, y_new, rule)
    return fit_laplace(_log_target(problem, k, prior), beta_max, k)


@dataclass(frozen=True, eq=False)
class OrderPosterior:
    """Normalised weights over ``K = 1..k_max`` with the per-order fits.

    ``weights[j]`` belongs to ``K = j + 1``; ``k_star`` is the 1-based order
    with the largest weight (lowest ``K`` on ties).
    """

    weights: np.ndarray
    fits: tuple[LaplaceFit, ...]
    log_alpha: np.ndarray
    k_max: int
    k_star: int

    @property
    def modes(self) -> np.ndarray:
        return np.array([f.mode for f in self.fits])

    @property
    def variances(self) -> np.ndarray:
        return np.array([f.variance for f in self.fits])

    @property
    def flagged(self) -> bool:
        return any(f.flagged for f in self.fits)


def normalize_order_weights(log_alpha) -> tuple[np.ndarray, int]:
    """Normalise unnormalised log weights; returns ``(weights, k_star)``."""
    log_alpha = np.asarray(log_alpha, dtype=float)
    if log_alpha.ndim != 1 or log_alpha.size == 0:
        raise InputError("need a non-empty 1-D array of log weights")
    m = np.max(log_alpha)
    if not np.isfinite(m):
        raise NumericalError("no order has finite posterior weight")
    w = np.exp(log_alpha - m)
    w /= w.sum()
    return w, int(np.argmax(w)) + 1


def default_k_max(n_train: int) -> int:
    return max(1, min(25, n_train - 1))


def order_posterior(train: LabeledDataset, y_new, k_max: int | None, rule,
                    prior: GammaPrior | None = None, beta_max: float = 20.0,
                    problem: AugmentedProblem | None = None) -> OrderPosterior:
    """Approximate ``p(K | Y)`` for ``K = 1..k_max`` under a uniform order prior."""
    prior = prior or GammaPrior()
    if problem is None:
        problem = AugmentedProblem(train, y_new, rule)
    if k_max is None:
        k_max = default_k_max(train.n)
    if not 1 <= k_max <= problem.max_k:
        raise InputError(f"k_max={k_max} out of range 1..{problem.max_k}")
    fits = []
    log_alpha = np.empty(k_max)
    for j in range(1, k_max + 1):
        fit = fit_laplace(_log_target(problem, j, prior), beta_max, j)
        fits.append(fit)
        # joint at the mode over the Gaussian density at its own mean
        log_alpha[j - 1] = (fit.log_posterior_at_mode - math.log(k_max)
                            + 0.5 * (LOG_2PI + math.log(fit.variance)))
    weights, k_star = normalize_order_weights(log_alpha)
    return OrderPosterior(weights, tuple(fits), log_alpha, k_max, k_star)


def beta_marginal_moments(op: OrderPosterior) -> tuple[float, float]:
    """Mean and variance of the order-weighted mixture of per-order Gaussians."""
    w, mu, var = op.weights, op.modes, op.variances
    mean = float(w @ mu)
    return mean, float(w @ (var + (mean - mu) ** 2))


@dataclass(frozen=True, eq=False)
class BetaGrid:
    """Evenly spaced ``beta`` values inside ``(0, beta_max]``."""

    points: np.ndarray
    spacing: float
    beta_max: float


def build_beta_grid(mu_beta: float, sigma_beta: float, beta_max: float) -> BetaGrid:
    """Points ``mu_beta + i * sigma_beta`` (``i`` any integer) in ``(0, beta_max]``.

    Falls back to the single clamped point ``max(1e-6, min(mu_beta, beta_max))``
    when no grid point lands inside the interval.
    """
    if not sigma_beta > 0:
        raise InputError("sigma_beta must be positive")
    lo = math.floor(-mu_beta / sigma_beta) - 1
    hi = math.ceil((beta_max - mu_beta) / sigma_beta) + 1
    pts = mu_beta + sigma_beta * np.arange(lo, hi + 1)
    pts = pts[(pts > 0) & (pts <= beta_max * (1 + 1e-12))]
    if pts.size == 0:
        pts = np.array([max(GRID_FLOOR, min(mu_beta, beta_max))])
    return BetaGrid(pts, float(sigma_beta), float(beta_max))


@dataclass(frozen=True, eq=False)
class PredictiveResult:
    """Model-averaged class posterior for one test point.

    ``mixture_weights[m, j]`` is the normalised weight of grid point ``m`` and
    order ``K = j + 1``. ``optimal_probs`` is the class posterior at ``K*``
    and its ``beta`` mode alone. ``label_mean``/``label_variance`` treat the
    class index ``0..C-1`` as a number and are diagnostics only.
    """

    class_probs: np.ndarray
    mixture_weights: np.ndarray
    label_mean: float
    label_variance: float
    optimal_probs: np.ndarray
    order: OrderPosterior
    grid: BetaGrid

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.class_probs))

    @property
    def predicted_optimal(self) -> int:
        return int(np.argmax(self.optimal_probs))


@dataclass(frozen=True)
class KoreaConfig:
    """Settings for :func:`classify`. ``k_max=None`` means ``min(25, N - 1)``."""

    k_max: int | None = None
    rule: NeighbourRule = NeighbourRule.ASYMMETRIC
    prior: GammaPrior = field(default_factory=GammaPrior)
    beta_max: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "rule", NeighbourRule.parse(self.rule))
        if self.k_max is not None and self.k_max < 1:
            raise InputError("k_max must be >= 1")
        if not self.beta_max > 0:
            raise InputError("beta_max must be positive")


def predictive_mixture(order: OrderPosterior, grid: BetaGrid, class_posterior):
    """Mix per-cell class posteriors over the ``(beta, K)`` grid.

    ``class_posterior(k, betas)`` returns an ``(len(betas), C)`` array of
    normalised class probabilities. Returns ``(class_probs, weights,
    label_mean, label_variance)``.
    """
    betas = grid.points
    log_lam = np.stack([fit.log_density(betas) for fit in order.fits], axis=1)
    log_lam = log_lam + np.log(order.weights)[None, :]
    lam = np.exp(log_lam - log_lam.max())
    lam /= lam.sum()

    probs = None
    mean_cell = np.zeros_like(lam)
    var_cell = np.zeros_like(lam)
    for j in range(order.k_max):
        live = lam[:, j] > 0
        if not live.any():
            continue
        tau = np.asarray(class_posterior(j + 1, betas[live]), dtype=float)
        if probs is None:
            probs = np.zeros(tau.shape[1])
            codes = np.arange(tau.shape[1], dtype=float)
        probs += lam[live, j] @ tau
        mu = tau @ codes
        mean_cell[live, j] = mu
        var_cell[live, j] = np.maximum(tau @ codes**2 - mu**2, 0.0)

    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise NumericalError(f"class probabilities drifted to total {total}")
    probs = probs / total
    mean = float(np.sum(lam * mean_cell))
    variance = float(np.sum(lam * (var_cell + (mean - mean_cell) ** 2)))
    return probs, lam, mean, variance


def classify(train: LabeledDataset, y_new, config: KoreaConfig | None = None, *,
             problem: AugmentedProblem | None = None,
             grid: BetaGrid | None = None) -> PredictiveResult:
    """Model-averaged class posterior of ``y_new`` given labelled ``train``.

    ``grid`` overrides the moment-matched ``beta`` grid.
    """
    config = config or KoreaConfig()
    if problem is None:
        problem = AugmentedProblem(train, y_new, config.rule)
    op = order_posterior(train, y_new, config.k_max, config.rule, config.prior,
                         config.beta_max, problem=problem)
    if grid is None:
        mu, var = beta_marginal_moments(op)
        grid = build_beta_grid(mu, math.sqrt(var), config.beta_max)

    def class_posterior(k, betas):
        return problem.joint(k).class_posterior(betas)

    probs, lam, mean, variance = predictive_mixture(op, grid, class_posterior)
    best = op.fits[op.k_star - 1]
    optimal = class_posterior(op.k_star, np.array([best.mode]))[0]
    return PredictiveResult(probs, lam, mean, variance, optimal, op, grid)


def classify_batch(train: LabeledDataset, tests, config: KoreaConfig | None = None):
    """:func:`classify` for every row of ``tests``.

    Items are independent. A failing item yields its :class:`PknnError`
    in place of a result and the batch carries on.
    """
    config = config or KoreaConfig()
    index = NeighbourIndex(train.points)
    out = []
    for y in tests:
        try:
            problem = AugmentedProblem(train, y, config.rule, index=index)
            out.append(classify(train, y, config, problem=problem))
        except PknnError as exc:
            out.append(exc)
    return out
