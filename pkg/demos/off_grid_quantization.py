"""Sources that fall between grid cells.

Same four-source, one-block setup as exact_recovery_noiseless.py, but every
start angle and slope is offset by half a cell (e.g. -15.5 degrees on a
1-degree grid), and the noise is back at 10 dB.  Grid methods can do no
better than the nearest cell, so the interesting question is whether each
estimate lands within half a step of the truth -- and what that costs in
per-snapshot error.
"""
import dataclasses

import numpy as np

from doatraj.experiments import example_config, run_experiment

# Two of the four sources end the block 7 degrees apart, which the default
# scoring rule would treat as a crossing region and refuse to score -- these
# sources never actually cross, so turn the exclusion off.
cfg = dataclasses.replace(example_config(2, seed=3), crossing_threshold=0.0)
truth = sorted((s.trajectory.phi, s.trajectory.alpha) for s in cfg.scenario.sources)
print("true (start, change) pairs:", truth)
print("grid steps: 1 degree in both start angle and per-block change")

result = run_experiment(cfg)

for alg in ("tl-cbf", "tl-sbl"):
    got = sorted((e.params.phi, e.params.alpha) for e in result.estimates[alg][0])
    print(f"{alg:7s} -> {got}")

# Per-snapshot error after matching estimates to sources.  CBF again spends
# one of its four peaks on a spurious lobe (same failure as in
# exact_recovery_noiseless.py), and the scorer duly counts it, so its RMSE
# is dominated by that one bad match.  For TL-SBL the error is pure
# quantization: half a grid step, nothing more.
print("\nper-snapshot RMSE, degrees:")
for alg in ("cbf", "tl-cbf", "sbl", "tl-sbl"):
    print(f"  {alg:7s} {result.reports[alg].overall_rmse:5.2f}")

est = np.array(sorted((e.params.phi, e.params.alpha) for e in result.estimates["tl-sbl"][0]))
off = est - np.array(truth)
print("\nTL-SBL offset from truth (start, change), degrees:")
for row in off:
    print(f"  ({row[0]:+.1f}, {row[1]:+.1f})")
