"""How close do sampled K-posteriors get to the Laplace-based one?

A Metropolis-Hastings chain over (z', beta, K) is run at three lengths for a
single Wine test point. Each chain's K histogram is compared with the
deterministic approximation using four density metrics, and the last chain
is dumped as plot-ready CSV next to the KOREA posterior.

Run with ``python gallery/02_korea_vs_mcmc.py [out_dir]``.
"""

import sys
from pathlib import Path

import numpy as np

from pknn import KoreaConfig, McmcConfig, classify, run_chain
from pknn.harness import ExperimentConfig, dump_posterior, load_builtin, standardize_dataset
from pknn.metrics import density_kld, density_psnr, density_rmse, density_ssim

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("wine_posterior")

data = load_builtin("wine")
test_index = 0
keep = np.arange(1, data.n)
train, test = standardize_dataset(data.subset(keep), data.subset([test_index]))
y = test.points[0]

res = classify(train, y, KoreaConfig())
p_k = res.order.weights
print(f"KOREA: K* = {res.order.k_star}, p(K*) = {p_k.max():.3f}, "
      f"class probs {np.round(res.class_probs, 3)}")

print(f"\n{'iterations':>10} {'RMSE':>8} {'KLD':>8} {'PSNR':>7} {'SSIM':>6}  accept")
for n in (100, 1_000, 10_000):
    trace = run_chain(train, y, McmcConfig(n, seed=1, k_max=res.order.k_max))
    q = trace.k_distribution()
    print(f"{n:>10} {density_rmse(p_k, q):8.4f} {density_kld(p_k, q):8.4f} "
          f"{density_psnr(p_k, q):7.2f} {density_ssim(p_k, q):6.3f}  {trace.acceptance_rate:.2f}")

# Both methods on shared (K, beta) axes, ready for a heat map.
cfg = ExperimentConfig("wine", standardize=True, mcmc_iterations=10_000, seed=1)
for method in ("korea", "mcmc"):
    paths = dump_posterior(cfg, test_index, out_dir, method=method)
    print(f"\n{method}: " + ", ".join(str(p) for p in paths.values()))
