import math

import numpy as np
import pytest

from pknn.optimize import central_derivatives, golden_section_max, newton_max


def test_golden_section_quadratic():
    x, fx = golden_section_max(lambda t: -(t - 1.3) ** 2, 0.0, 5.0)
    assert x == pytest.approx(1.3, abs=1e-8) and fx == pytest.approx(0.0, abs=1e-15)


def test_central_derivatives_cubic():
    g, c = central_derivatives(lambda t: t**3, 2.0, 1e-4)
    assert g == pytest.approx(12.0, rel=1e-7) and c == pytest.approx(12.0, rel=1e-5)


@pytest.mark.parametrize("x0", [0.05, 1.0, 4.0, 9.9])
def test_newton_log_gamma_density(x0):
    # log of a Gamma(3, 2) density; mode at 4
    def f(t):
        return 2.0 * math.log(t) - t / 2.0

    x, fx, _ = newton_max(f, 1e-9, 10.0, x0)
    assert x == pytest.approx(4.0, abs=1e-7)
    assert fx == pytest.approx(f(4.0), abs=1e-12)


def test_newton_batch_matches_scalar():
    def f(t):
        return -math.cosh(t - 0.7)

    def batch(xs):
        return [-math.cosh(t - 0.7) for t in xs]

    a = newton_max(f, -3.0, 3.0, 2.5)
    b = newton_max(f, -3.0, 3.0, 2.5, batch=batch)
    assert a == b


def test_newton_bisects_when_start_is_convex():
    # starts in the convex tail of a bump; Newton steps are unusable there
    def f(t):
        return math.exp(-((t - 2.0) ** 2))

    x, _, _ = newton_max(f, 0.0, 6.0, 5.5)
    assert x == pytest.approx(2.0, abs=1e-7)


def test_newton_stops_on_bracket_edge():
    x, _, it = newton_max(lambda t: t, 0.0, 1.0, 1.0)
    assert x == 1.0 and it == 1


def test_newton_on_noisy_plateau_terminates():
    rng = np.random.default_rng(0)
    noise = rng.normal(scale=1e-15, size=1000)

    def f(t):
        return -((t - 0.5) ** 2) * 1e-6 + noise[int(t * 999) % 1000]

    x, _, it = newton_max(f, 0.0, 1.0, 0.9)
    assert 0.0 < x < 1.0 and it < 200
