"""Joint Metropolis-Hastings over (test label, beta, K).

Each step proposes ``K'`` uniformly on ``1..k_max``, ``beta'`` from a
Gaussian random walk, and the test label from its exact conditional given
``(beta', K')``. With that label proposal the acceptance ratio reduces to

    sum_c p(z'=c, z | beta', K') p(beta') q(beta | beta')
    -----------------------------------------------------
    sum_c p(z'=c, z | beta,  K ) p(beta ) q(beta' | beta)

Random numbers for ``n`` steps are drawn up front, in this order:
``n`` standard normals (beta increments), ``n`` integers on ``1..k_max``
(orders), then an ``(n, 2)`` block of uniforms (label draw, accept test).
Every step owns its four numbers whether or not the proposal survives.
Chains use numpy's PCG64; independent chains get streams from
``SeedSequence(seed).spawn``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset, NeighbourIndex, NeighbourRule
from .errors import InputError
from .korea import GammaPrior, default_k_max
from .likelihood import AugmentedProblem

__all__ = [
    "ChainState",
    "ChainTrace",
    "McmcConfig",
    "JointTarget",
    "make_rng",
    "spawn_rngs",
    "draw_proposals",
    "mh_step",
    "run_chain",
]


@dataclass(frozen=True)
class ChainState:
    z_new: int
    beta: float
    k: int


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent generators split from one seed."""
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


class JointTarget:
    """Unnormalised ``p(z', beta, K | Y)`` for one test point.

    The Gamma prior on ``beta`` is truncated to ``(0, beta_max]``.
    """

    def __init__(self, train: LabeledDataset, y_new, rule, prior: GammaPrior | None = None,
                 k_max: int | None = None, beta_max: float = 20.0,
                 problem: AugmentedProblem | None = None):
        self.problem = problem or AugmentedProblem(train, y_new, rule)
        self.prior = prior or GammaPrior()
        self.k_max = default_k_max(train.n) if k_max is None else int(k_max)
        if not 1 <= self.k_max <= self.problem.max_k:
            raise InputError(f"k_max={self.k_max} out of range 1..{self.problem.max_k}")
        self.beta_max = float(beta_max)
        self.class_count = train.class_count
        self._prior_const = (math.lgamma(self.prior.shape)
                             + self.prior.shape * math.log(self.prior.scale))

    def in_support(self, beta: float, k: int) -> bool:
        return 0.0 < beta <= self.beta_max and 1 <= k <= self.k_max

    def log_prior(self, beta: float) -> float:
        a, b = self.prior.shape, self.prior.scale
        return (a - 1.0) * math.log(beta) - beta / b - self._prior_const

    def evaluate(self, beta: float, k: int) -> tuple[float, np.ndarray]:
        """``(log sum_c p(c, z | beta, k) + log p(beta), p(z' | beta, k))``."""
        lj = self.problem.joint(k).log_joint(beta)
        m = lj.max()
        e = np.exp(lj - m)
        s = e.sum()
        return m + math.log(s) + self.log_prior(beta), e / s

    def log_marginal(self, beta: float, k: int) -> float:
        if not self.in_support(beta, k):
            return -math.inf
        return self.evaluate(beta, k)[0]


def _draw_label(probs: np.ndarray, u: float) -> int:
    c = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(c, len(probs) - 1)


def _gauss_logq(x: float, mean: float, sd: float) -> float:
    return -0.5 * ((x - mean) / sd) ** 2 - math.log(sd)


def draw_proposals(rng: np.random.Generator, n: int, k_max: int):
    """Random inputs for ``n`` steps: ``(eps, k, u_label, u_accept)`` arrays."""
    eps = rng.standard_normal(n)
    ks = rng.integers(1, k_max + 1, size=n)
    u = rng.random((n, 2))
    return eps, ks, u[:, 0], u[:, 1]


def _step(state: ChainState, log_current: float, target: JointTarget,
          draws, proposal_sd: float):
    eps, k_prop, u_label, u_accept = draws
    k_prop = int(k_prop)
    beta_prop = state.beta + proposal_sd * eps
    if not target.in_support(beta_prop, k_prop):
        return state, log_current, False
    log_prop, probs = target.evaluate(beta_prop, k_prop)
    log_ratio = (log_prop + _gauss_logq(state.beta, beta_prop, proposal_sd)
                 - log_current - _gauss_logq(beta_prop, state.beta, proposal_sd))
    if log_ratio >= 0 or u_accept < math.exp(log_ratio):
        new = ChainState(_draw_label(probs, u_label), beta_prop, k_prop)
        return new, log_prop, True
    return state, log_current, False


def mh_step(state: ChainState, target: JointTarget, rng: np.random.Generator,
            proposal_sd: float = math.sqrt(0.1)) -> tuple[ChainState, bool]:
    """One Metropolis-Hastings update; returns ``(next_state, accepted)``."""
    log_current = target.log_marginal(state.beta, state.k)
    draws = [float(a[0]) for a in draw_proposals(rng, 1, target.k_max)]
    new, _, accepted = _step(state, log_current, target, draws, proposal_sd)
    return new, accepted


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings.

    ``proposal_scale`` is the random-walk variance of ``beta`` unless
    ``scale_is_variance`` is false, in which case it is the standard
    deviation. ``burn_in=None`` discards the first 10% of iterations.
    """

    iterations: int = 10000
    burn_in: int | None = None
    seed: int = 0
    k_max: int | None = None
    rule: NeighbourRule = NeighbourRule.ASYMMETRIC
    prior: GammaPrior = field(default_factory=GammaPrior)
    beta_max: float = 20.0
    proposal_scale: float = 0.1
    scale_is_variance: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rule", NeighbourRule.parse(self.rule))
        burn = self.iterations // 10 if self.burn_in is None else self.burn_in
        object.__setattr__(self, "burn_in", int(burn))
        if not self.iterations > self.burn_in >= 0:
            raise InputError("need iterations > burn_in >= 0")
        if not self.proposal_scale > 0:
            raise InputError("proposal_scale must be positive")

    @property
    def proposal_sd(self) -> float:
        return math.sqrt(self.proposal_scale) if self.scale_is_variance else self.proposal_scale


@dataclass(frozen=True, eq=False)
class ChainTrace:
    """States visited by one chain (``iterations`` entries, initial state excluded)."""

    z_new: np.ndarray
    beta: np.ndarray
    k: np.ndarray
    accepted: np.ndarray
    seed: object
    burn_in: int
    k_max: int
    class_count: int

    def __len__(self) -> int:
        return len(self.k)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self) else 0.0

    def k_distribution(self) -> np.ndarray:
        """Post-burn-in frequencies of ``K = 1..k_max``."""
        ks = self.k[self.burn_in:]
        return np.bincount(ks - 1, minlength=self.k_max)[: self.k_max] / len(ks)

    def z_distribution(self) -> np.ndarray:
        zs = self.z_new[self.burn_in:]
        return np.bincount(zs, minlength=self.class_count)[: self.class_count] / len(zs)

    def beta_histogram(self, edges) -> np.ndarray:
        counts, _ = np.histogram(self.beta[self.burn_in:], bins=edges)
        return counts / max(counts.sum(), 1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "z_new", "beta", "k", "accepted"])
            for i in range(len(self)):
                w.writerow([i + 1, int(self.z_new[i]), repr(float(self.beta[i])),
                            int(self.k[i]), int(self.accepted[i])])


def initial_state(target: JointTarget) -> ChainState:
    beta = min(max(target.prior.mode, 1e-3), target.beta_max)
    probs = target.evaluate(beta, 1)[1]
    return ChainState(int(np.argmax(probs)), beta, 1)


def run_chain(train: LabeledDataset, y_new, config: McmcConfig | None = None, *,
              rng: np.random.Generator | None = None,
              initial: ChainState | None = None,
              index: NeighbourIndex | None = None) -> ChainTrace:
    """Run one chain of ``config.iterations`` steps for test point ``y_new``."""
    config = config or McmcConfig()
    problem = AugmentedProblem(train, y_new, config.rule, index=index)
    target = JointTarget(train, y_new, config.rule, config.prior, config.k_max,
                         config.beta_max, problem=problem)
    rng = rng if rng is not None else make_rng(config.seed)
    state = initial or initial_state(target)
    if not target.in_support(state.beta, state.k):
        raise InputError("initial state outside the support")
    log_current = target.log_marginal(state.beta, state.k)
    n = config.iterations
    z = np.empty(n, dtype=np.int64)
    beta = np.empty(n)
    k = np.empty(n, dtype=np.int64)
    acc = np.empty(n, dtype=bool)
    sd = config.proposal_sd
    draws = zip(*(a.tolist() for a in draw_proposals(rng, n, target.k_max)))
    for i, d in enumerate(draws):
        state, log_current, acc[i] = _step(state, log_current, target, d, sd)
        z[i], beta[i], k[i] = state.z_new, state.beta, state.k
    return ChainTrace(z, beta, k, acc, config.seed, config.burn_in, target.k_max,
                      train.class_count)
