"""Single-core latency across depth multipliers, structured like the
reference results table (Model / Depth multiplier / Inference / Total).

Depth multiplier 0.25/0.5/1.0 scales every channel width; parameter and
multiply-accumulate counts shrink roughly quadratically, and measured
latency follows. Absolute milliseconds are machine-specific.
"""

import numpy as np

from gesturedet import model as M
from gesturedet.bench import benchmark, bootstrap_mean_less, sustained_fps

reports = {}
for alpha in (0.25, 0.5, 1.0):
    config = M.full_config(width=320, height=240, alpha=alpha)
    params = M.init_params(config, seed=0)
    rep = benchmark(config, params, n_runs=30, warmup_runs=5, seed=0)
    reports[alpha] = rep
    print(f"measured {rep.model_name}: params {config.count_params() / 1e6:.2f}M, "
          f"MACs {config.count_macs() / 1e6:.0f}M/frame")

print(f"\n{'Model':<12} {'Depth multiplier':>16} {'Inference (ms)':>15} "
      f"{'Total (ms)':>11} {'p95 inf (ms)':>13}")
for alpha, rep in reports.items():
    print(f"{rep.model_name:<12} {alpha:>16.2f} {rep.inference['mean']:>15.2f} "
          f"{rep.total_mean:>11.2f} {rep.inference['p95']:>13.2f}")

c1 = bootstrap_mean_less(reports[0.25].samples["inf"], reports[0.5].samples["inf"])
c2 = bootstrap_mean_less(reports[0.5].samples["inf"], reports[1.0].samples["inf"])
print(f"\nordering confidence (bootstrap): "
      f"P[0.25 < 0.5] = {c1:.3f}, P[0.5 < 1.0] = {c2:.3f}")

config = M.full_config(width=320, height=240, alpha=0.25)
params = M.init_params(config, seed=0)
rng = np.random.default_rng(0)
frames = [rng.integers(0, 256, (240, 320), dtype=np.uint8) for _ in range(8)]
fps = sustained_fps(config, params, frames, duration_s=5.0)
print(f"\nsustained end-to-end throughput, alpha=0.25: {fps:.1f} fps "
      f"(upper bound from latency: {1000 / reports[0.25].total_mean:.1f} fps)")
print(f"machine: {reports[0.25].machine['processor']} / "
      f"numpy {reports[0.25].machine['numpy']}, BLAS threads 1")
