"""One-dimensional maximisation: safeguarded Newton with a golden-section fallback."""

from __future__ import annotations

import math

__all__ = ["golden_section_max", "newton_max", "central_derivatives"]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Maximiser of a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol * (1.0 + abs(a) + abs(b)):
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def central_derivatives(f, x: float, h: float, fx: float | None = None):
    """First and second central differences of ``f`` at ``x``."""
    if fx is None:
        fx = f(x)
    fp, fm = f(x + h), f(x - h)
    return (fp - fm) / (2.0 * h), (fp - 2.0 * fx + fm) / (h * h)


def newton_max(f, lo: float, hi: float, x0: float, tol: float = 1e-10, max_iter: int = 200,
               batch=None):
    """Maximise ``f`` on ``(lo, hi)`` starting from ``x0``.

    Newton steps use central-difference derivatives. The bracket shrinks
    towards the uphill side after every gradient evaluation; when the
    Newton step is unusable (non-negative curvature or a step leaving the
    bracket) the bracket midpoint is tried instead. A trial point that is
    lower than the incumbent becomes the new far end of the bracket.

    ``batch(xs)``, if given, evaluates ``f`` at several points in one call;
    each trial point and its two difference points then cost a single call.

    Returns ``(x, f(x), n_iter)``.
    """

    def probe(x):
        h = min(1e-5 * max(abs(x), 1e-2), 0.5 * (x - lo), 0.5 * (hi - x))
        if h <= 0:
            return f(x), h, None
        if batch is not None:
            fx, fp, fm = batch([x, x + h, x - h])
        else:
            fx, fp, fm = f(x), f(x + h), f(x - h)
        return fx, h, ((fp - fm) / (2.0 * h), (fp - 2.0 * fx + fm) / (h * h))

    x = x0
    fx, h, derivs = probe(x)
    for it in range(1, max_iter + 1):
        if h <= 0:
            return x, fx, it
        g, curv = derivs
        if g > 0:
            lo = max(lo, x)
        elif g < 0:
            hi = min(hi, x)
        else:
            return x, fx, it
        if hi - lo <= tol * (1.0 + abs(x)):
            return x, fx, it
        newton = curv < 0 and lo < x - g / curv < hi
        cand = x - g / curv if newton else 0.5 * (lo + hi)
        fc, hc, dc = probe(cand)
        step = abs(cand - x)
        if fc >= fx:
            x, fx, h, derivs = cand, fc, hc, dc
            if newton and step <= tol * (1.0 + abs(x)):
                return x, fx, it
            continue
        # a sub-rounding step that loses height means x is already the top
        if newton and step <= 1e-8 * (1.0 + abs(x)):
            return x, fx, it
        if cand > x:
            hi = cand
        else:
            lo = cand
    return x, fx, max_iter
