import math

import numpy as np
import pytest

from oracles import exact_posteriors, gamma_logpdf, joint_table, total_variation
from pknn import (
    AugmentedProblem,
    GammaPrior,
    InputError,
    InteractionParams,
    KoreaConfig,
    LabeledDataset,
    NumericalError,
    classify,
    classify_batch,
    conditional_class_posterior,
    order_posterior,
)
from pknn.korea import (
    BetaGrid,
    LaplaceFit,
    OrderPosterior,
    beta_marginal_moments,
    build_beta_grid,
    fit_laplace,
    laplace_beta_posterior,
    normalize_order_weights,
    predictive_mixture,
)

RULES = ["asymmetric", "boltzmann", "boltzmann2"]

# trapezoid quadrature over beta in [0, 20] (2000 points), exhaustive K = 1..3
FIXTURE4_EXACT = {
    ("asymmetric", (0.5, 0.0)): ([0.505596117, 0.3418040052, 0.1525998778],
                                 [0.8655648399, 0.1344351601]),
    ("asymmetric", (2.0, 2.0)): ([0.5757893553, 0.2050729738, 0.2191376709],
                                 [0.0961576182, 0.9038423818]),
    ("boltzmann", (0.5, 0.0)): ([0.9658563388, 0.0328063859, 0.0013372753],
                                [0.99903949351, 0.00096050649160]),
    ("boltzmann", (2.0, 2.0)): ([0.7157169523, 0.2095219339, 0.0747611138],
                                [0.031231538, 0.968768462]),
    ("boltzmann2", (0.5, 0.0)): ([0.9474134938, 0.0438794705, 0.0087070357],
                                 [0.992962449, 0.007037551]),
    ("boltzmann2", (2.0, 2.0)): ([0.0277891757, 0.9547223502, 0.0174884741],
                                 [0.0119779465, 0.9880220535]),
}


def _order(weights, modes, variances):
    fits = tuple(LaplaceFit(j + 1, m, v, 0.0) for j, (m, v) in enumerate(zip(modes, variances)))
    w = np.asarray(weights, dtype=float)
    return OrderPosterior(w, fits, np.log(w), len(fits), int(np.argmax(w)) + 1)


def test_gamma_prior():
    p = GammaPrior()
    assert p.mode == 10.0
    assert p.logpdf(0.0) == -np.inf and p.logpdf(-1.0) == -np.inf
    assert float(p.logpdf(3.0)) == pytest.approx(gamma_logpdf(3.0))
    grid = np.linspace(1e-9, 2000, 400001)
    assert np.trapezoid(np.exp(p.logpdf(grid)), grid) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(InputError):
        GammaPrior(0.0, 1.0)


def test_laplace_exact_on_gaussian():
    def log_target(b):
        return -0.5 * (b - 2.0) ** 2 / 0.25

    fit = fit_laplace(log_target, 20.0)
    assert fit.mode == pytest.approx(2.0, abs=1e-6)
    assert fit.variance == pytest.approx(0.25, abs=1e-4)
    assert not fit.flagged and not fit.at_boundary


def test_laplace_prior_only_target():
    fit = fit_laplace(GammaPrior().logpdf, 20.0)
    assert fit.mode == pytest.approx(10.0, abs=1e-6)
    # curvature of (a-1) log b - b/s at the mode is -(a-1)/b^2
    assert fit.variance == pytest.approx(100.0, rel=1e-4)


def test_laplace_upper_boundary():
    fit = fit_laplace(lambda b: 0.5 * b - 0.1 * (b - 30.0) ** 2 / 10, 20.0)
    assert fit.at_boundary and fit.mode == 20.0
    assert fit.variance > 0


def test_laplace_flat_target_falls_back_to_quadrature():
    fit = fit_laplace(lambda b: np.zeros_like(b), 20.0)
    assert fit.flagged
    assert fit.variance == pytest.approx(400 / 12, rel=1e-3)


def test_laplace_nonfinite_target():
    with pytest.raises(NumericalError):
        fit_laplace(lambda b: np.full_like(b, -np.inf), 20.0)


def _quadrature_log_target(fixture4, y, k, rule):
    betas = np.linspace(0, 20, 2000)
    table = joint_table(fixture4.points, fixture4.labels, y, k, rule, 2, betas)[k - 1]
    prior = np.array([gamma_logpdf(b) for b in betas])
    return betas, np.logaddexp(table[:, 0], table[:, 1]) + prior


@pytest.mark.parametrize("rule", RULES)
def test_laplace_fixture4_mode_and_curvature(fixture4, rule):
    betas, lt = _quadrature_log_target(fixture4, (0.5, 0.0), 1, rule)
    i = int(np.argmax(lt))
    h = betas[1] - betas[0]
    curv = (lt[i + 1] - 2 * lt[i] + lt[i - 1]) / h**2
    fit = laplace_beta_posterior(fixture4, (0.5, 0.0), 1, rule)
    assert fit.mode == pytest.approx(betas[i], abs=2 * h)
    assert fit.variance == pytest.approx(-1 / curv, rel=0.02)


@pytest.mark.xfail(strict=True, reason="Laplace mode/curvature differ from posterior mean/variance "
                   "by >10% on this right-skewed posterior (mode 1.98 vs mean 2.59)")
def test_laplace_fixture4_moment_matched(fixture4):
    betas, lt = _quadrature_log_target(fixture4, (0.5, 0.0), 1, "asymmetric")
    dens = np.exp(lt - lt.max())
    z = np.trapezoid(dens, betas)
    mean = np.trapezoid(betas * dens, betas) / z
    var = np.trapezoid((betas - mean) ** 2 * dens, betas) / z
    fit = laplace_beta_posterior(fixture4, (0.5, 0.0), 1, "asymmetric")
    assert fit.mode == pytest.approx(mean, rel=0.1)
    assert fit.variance == pytest.approx(var, rel=0.1)


def test_normalize_order_weights():
    w, k_star = normalize_order_weights([3.0, 3.0])
    np.testing.assert_allclose(w, [0.5, 0.5])
    assert k_star == 1
    w2, k2 = normalize_order_weights(np.array([1.0, 5.0, 2.0]) + 1e4)
    w3, k3 = normalize_order_weights([1.0, 5.0, 2.0])
    np.testing.assert_allclose(w2, w3, atol=1e-15)
    assert k2 == k3 == 2
    w, _ = normalize_order_weights([-5000.0, -5001.0])
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(NumericalError):
        normalize_order_weights([-np.inf, -np.inf])


def test_order_posterior_single_order(fixture4):
    op = order_posterior(fixture4, (1.0, 1.0), 1, "asymmetric")
    np.testing.assert_array_equal(op.weights, [1.0])
    assert op.k_star == 1


def test_order_posterior_k_max_range(fixture4):
    with pytest.raises(InputError):
        order_posterior(fixture4, (1.0, 1.0), 5, "asymmetric")
    with pytest.raises(InputError):
        KoreaConfig(k_max=0)


@pytest.mark.parametrize("key", sorted(FIXTURE4_EXACT))
def test_fixture4_against_quadrature(fixture4, key):
    rule, y = key
    pk, pc = FIXTURE4_EXACT[key]
    res = classify(fixture4, y, KoreaConfig(3, rule))
    assert total_variation(res.order.weights, pk) <= 0.05
    assert total_variation(res.class_probs, pc) <= 0.05


def test_frozen_oracle_values_reproduce(fixture4):
    pk, pc = exact_posteriors(fixture4.points, fixture4.labels, (0.5, 0.0), 3, "asymmetric", 2)
    expect_k, expect_c = FIXTURE4_EXACT[("asymmetric", (0.5, 0.0))]
    np.testing.assert_allclose(pk, expect_k, atol=1e-9)
    np.testing.assert_allclose(pc, expect_c, atol=1e-9)


def test_oracle_refinement_is_stable(fixture4):
    a = exact_posteriors(fixture4.points, fixture4.labels, (2.0, 2.0), 3, "boltzmann", 2)
    b = exact_posteriors(fixture4.points, fixture4.labels, (2.0, 2.0), 3, "boltzmann", 2,
                         n_grid=4000)
    for x, y in zip(a, b):
        assert np.max(np.abs(x - y)) < 1e-6


def test_beta_moments_examples():
    assert beta_marginal_moments(_order([1.0], [4.2], [0.7])) == pytest.approx((4.2, 0.7))
    assert beta_marginal_moments(_order([0.5, 0.5], [1.0, 3.0], [0.0, 0.0])) == pytest.approx((2.0, 1.0))
    assert beta_marginal_moments(_order([0.25, 0.75], [2.0, 4.0], [1.0, 1.0])) == pytest.approx((3.5, 1.75))


@pytest.mark.parametrize("mu, sigma, bmax, expect", [
    (5.0, 2.0, 10.0, [1, 3, 5, 7, 9]),
    (1.0, 5.0, 10.0, [1, 6]),
    (0.5, 10.0, 5.0, [0.5]),
    (30.0, 2.0, 20.0, [2, 4, 6, 8, 10, 12, 14, 16, 18, 20]),
    (-3.0, 2.0, 6.0, [1, 3, 5]),
    (25.0, 30.0, 20.0, [20.0]),
])
def test_beta_grid_examples(mu, sigma, bmax, expect):
    np.testing.assert_allclose(build_beta_grid(mu, sigma, bmax).points, expect)


def test_beta_grid_rejects_zero_spacing():
    with pytest.raises(InputError):
        build_beta_grid(1.0, 0.0, 20.0)


def test_beta_grid_invariants():
    rng = np.random.default_rng(0)
    for _ in range(500):
        mu, sigma, bmax = rng.uniform(-5, 30), rng.uniform(0.01, 15), rng.uniform(0.5, 25)
        pts = build_beta_grid(mu, sigma, bmax).points
        assert np.all(np.diff(pts) > 0)
        assert np.all(pts > 0) and np.all(pts <= bmax)


def test_single_cell_mixture_equals_conditional(fixture4):
    grid = BetaGrid(np.array([3.0]), 1.0, 20.0)
    res = classify(fixture4, (0.5, 0.2), KoreaConfig(1, "boltzmann"), grid=grid)
    expect = conditional_class_posterior(fixture4, (0.5, 0.2), InteractionParams(3.0, 1),
                                         "boltzmann")
    np.testing.assert_allclose(res.class_probs, expect, atol=1e-13)
    np.testing.assert_allclose(res.mixture_weights, [[1.0]])


class _ConstantJoint:
    def __init__(self, C):
        self.C = C

    def log_marginal(self, beta):
        return np.zeros(np.shape(beta)) + math.log(self.C)

    def class_posterior(self, beta):
        return np.full(np.shape(beta) + (self.C,), 1.0 / self.C)


class _ConstantProblem:
    """Likelihood that ignores beta and the test label."""

    max_k = 4

    def joint(self, k):
        return _ConstantJoint(3)


def test_beta_independent_likelihood_gives_uniform(fixture4):
    data = LabeledDataset(fixture4.points, [0, 1, 2, 2], 3)
    res = classify(data, (0.0, 0.0), KoreaConfig(3), problem=_ConstantProblem())
    np.testing.assert_allclose(res.class_probs, [1 / 3] * 3, atol=1e-12)
    # prior-only posterior: same mode for every order, equal weights
    np.testing.assert_allclose(res.order.weights, [1 / 3] * 3, atol=1e-9)
    np.testing.assert_allclose(res.order.modes, 10.0, atol=1e-6)


def test_mixture_weights_use_order_weights_and_densities():
    op = _order([0.2, 0.8], [2.0, 5.0], [1.0, 4.0])
    grid = BetaGrid(np.array([1.0, 3.0, 5.0]), 2.0, 20.0)
    taus = {1: np.array([0.9, 0.1]), 2: np.array([0.3, 0.7])}
    probs, lam, mean, var = predictive_mixture(
        op, grid, lambda k, b: np.tile(taus[k], (len(b), 1)))
    dens = np.array([[0.2 * math.exp(-0.5 * (b - 2) ** 2) / math.sqrt(2 * math.pi),
                      0.8 * math.exp(-0.5 * (b - 5) ** 2 / 4) / math.sqrt(8 * math.pi)]
                     for b in grid.points])
    dens /= dens.sum()
    np.testing.assert_allclose(lam, dens, atol=1e-14)
    col = dens.sum(axis=0)
    np.testing.assert_allclose(probs, col[0] * taus[1] + col[1] * taus[2], atol=1e-14)
    # label moments on codes 0/1: a mixture of Bernoullis
    assert mean == pytest.approx(probs[1])
    assert var == pytest.approx(probs[1] * (1 - probs[1]))


@pytest.mark.parametrize("rule", RULES)
def test_result_normalisation(rule):
    rng = np.random.default_rng(2)
    for _ in range(10):
        n = int(rng.integers(3, 25))
        C = int(rng.integers(2, 5))
        data = LabeledDataset(rng.normal(size=(n, 3)), rng.integers(0, C, n), C)
        res = classify(data, rng.normal(size=3), KoreaConfig(None, rule))
        assert res.order.k_max == min(25, n - 1)
        assert res.class_probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert res.order.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert res.mixture_weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert res.label_variance >= 0
        assert res.optimal_probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_optimal_probs_at_k_star_mode(fixture4):
    res = classify(fixture4, (2.0, 2.0), KoreaConfig(3, "boltzmann2"))
    fit = res.order.fits[res.order.k_star - 1]
    expect = conditional_class_posterior(fixture4, (2.0, 2.0),
                                         InteractionParams(fit.mode, res.order.k_star),
                                         "boltzmann2")
    np.testing.assert_allclose(res.optimal_probs, expect, atol=1e-12)


def test_deterministic(fixture4):
    a = classify(fixture4, (0.3, 0.3), KoreaConfig(3, "boltzmann"))
    b = classify(fixture4, (0.3, 0.3), KoreaConfig(3, "boltzmann"))
    assert a.class_probs.tobytes() == b.class_probs.tobytes()
    assert a.mixture_weights.tobytes() == b.mixture_weights.tobytes()


def test_batch_contract(fixture4):
    cfg = KoreaConfig(3)
    assert classify_batch(fixture4, [], cfg) == []
    tests = [(0.5, 0.0), (2.0, 2.0), (0.0, 0.7)]
    single = classify(fixture4, tests[0], cfg)
    one = classify_batch(fixture4, tests[:1], cfg)[0]
    assert one.class_probs.tobytes() == single.class_probs.tobytes()
    fwd = classify_batch(fixture4, tests, cfg)
    rev = classify_batch(fixture4, tests[::-1], cfg)
    for a, b in zip(fwd, rev[::-1]):
        assert a.class_probs.tobytes() == b.class_probs.tobytes()


def test_batch_reports_item_errors(fixture4):
    out = classify_batch(fixture4, [(0.5, 0.0), (1.0, 2.0, 3.0), (2.0, 2.0)], KoreaConfig(3))
    assert isinstance(out[1], InputError)
    assert out[0].class_probs.shape == (2,) and out[2].class_probs.shape == (2,)


def test_shared_problem_reuse(fixture4):
    problem = AugmentedProblem(fixture4, (0.5, 0.0), "asymmetric")
    a = classify(fixture4, (0.5, 0.0), KoreaConfig(3), problem=problem)
    b = classify(fixture4, (0.5, 0.0), KoreaConfig(3))
    assert a.class_probs.tobytes() == b.class_probs.tobytes()
