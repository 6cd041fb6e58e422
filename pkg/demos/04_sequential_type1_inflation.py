"""Why anytime validity matters: peeking destroys fixed-sample tests.

Runs the classic sum test and an e-process on the same null streams under
sequential monitoring (decide at the first length that looks significant).
The sum test's false-rejection rate balloons with the number of looks; the
e-process stays below its level forever.
"""

import math

import numpy as np

from ewmark import Average, run
from ewmark.baselines import null_threshold, score_values, sequential_monitor

ALPHA = 0.05
T = 300
REPS = 400
rng = np.random.default_rng(99)

sum_hits = 0
eproc_hits = 0
fixed_hits = 0
for _ in range(REPS):
    ys = rng.random(T)
    if sequential_monitor(ys, "ars", ALPHA) is not None:
        sum_hits += 1
    # the same statistic used properly: tested once at the final length
    if score_values(ys, "ars").sum() >= null_threshold("ars", T, ALPHA):
        fixed_hits += 1
    verdict, _ = run(ys, Average(), ALPHA)
    if verdict.status.value == "rejected":
        eproc_hits += 1

se = math.sqrt(ALPHA * (1 - ALPHA) / REPS)
print(f"null streams: T={T}, replicates={REPS}, alpha={ALPHA} (3 SE = {3*se:.3f})")
print(f"  sum test, fixed length:          {fixed_hits / REPS:.3f}")
print(f"  sum test, sequential monitoring: {sum_hits / REPS:.3f}   <- inflated")
print(f"  e-process, sequential:           {eproc_hits / REPS:.3f}   <- anytime-valid")
