"""Classification scores and similarity measures between discrete densities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "DensityGrid",
    "f_measure",
    "density_rmse",
    "density_kld",
    "density_psnr",
    "density_ssim",
    "bin_to_grid",
    "PSNR_CAP",
]

PSNR_CAP = 300.0


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Nonnegative values over ``K`` cells or ``(K, beta)`` cells.

    ``axes`` holds the cell coordinates, one array per dimension.
    """

    values: np.ndarray
    axes: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim not in (1, 2):
            raise InputError("density grids are 1-D or 2-D")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InputError("density values must be finite and nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "axes", tuple(np.asarray(a) for a in self.axes))

    @property
    def normalized(self) -> bool:
        return abs(self.values.sum() - 1.0) <= 1e-9

    @property
    def shape(self):
        return self.values.shape


def _values(g) -> np.ndarray:
    return g.values if isinstance(g, DensityGrid) else np.asarray(g, dtype=float)


def _pair(p, q):
    p, q = _values(p), _values(q)
    if p.shape != q.shape:
        raise InputError(f"grid shapes differ: {p.shape} vs {q.shape}")
    return p.ravel(), q.ravel()


def f_measure(predicted, truth, class_count: int, average: str = "macro") -> float:
    """F1 score, macro-averaged over classes present in ``truth`` by default.

    ``average="micro"`` pools counts over classes, which for single-label
    data equals accuracy.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise InputError("predicted and truth must be 1-D of equal length")
    if predicted.size == 0:
        raise InputError("need at least one prediction")
    C = int(class_count)
    tp = np.bincount(truth[predicted == truth], minlength=C)[:C].astype(float)
    n_pred = np.bincount(predicted, minlength=C)[:C].astype(float)
    n_true = np.bincount(truth, minlength=C)[:C].astype(float)
    if average == "micro":
        return float(tp.sum() / truth.size)
    if average != "macro":
        raise InputError(f"unknown average {average!r}")
    denom = n_pred + n_true
    f1 = np.divide(2 * tp, denom, out=np.zeros(C), where=denom > 0)
    present = n_true > 0
    return float(f1[present].mean())


def density_rmse(p, q) -> float:
    a, b = _pair(p, q)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def density_kld(p, q, epsilon: float = 1e-12) -> float:
    """``KL(p || q)`` after adding ``epsilon`` to every cell and renormalising."""
    a, b = _pair(p, q)
    for name, v in (("p", a), ("q", b)):
        if abs(v.sum() - 1.0) > 1e-9 or np.any(v < 0):
            raise InputError(f"{name} is not a normalised density")
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    a = (a + epsilon) / (a + epsilon).sum()
    b = (b + epsilon) / (b + epsilon).sum()
    return float(max(np.sum(a * np.log(a / b)), 0.0))


def density_psnr(p, q) -> float:
    """PSNR in dB, peak taken from the reference grid ``q``; capped at 300."""
    a, b = _pair(p, q)
    mse = np.mean((a - b) ** 2)
    peak = b.max()
    if mse == 0:
        return PSNR_CAP
    if peak <= 0:
        return -PSNR_CAP
    return float(min(10.0 * np.log10(peak**2 / mse), PSNR_CAP))


def density_ssim(p, q) -> float:
    """Single-window SSIM of the flattened grids."""
    a, b = _pair(p, q)
    L = max(a.max(), b.max())
    if L <= 0:
        L = 1.0
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = np.mean((a - mu_a) * (b - mu_b))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(num / den)


def bin_to_grid(samples, centres) -> np.ndarray:
    """Normalised counts of ``samples`` assigned to the nearest of ``centres``.

    Samples beyond either end fall into the end cells.
    """
    centres = np.asarray(centres, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if centres.size == 1:
        return np.array([1.0]) if samples.size else np.array([0.0])
    edges = 0.5 * (centres[1:] + centres[:-1])
    idx = np.searchsorted(edges, samples, side="left")
    counts = np.bincount(idx, minlength=centres.size).astype(float)
    return counts / max(counts.sum(), 1.0)
