"""A desk-scale replica of the error-curve experiment.

Spike NTP streams, five detectors, three curves per detector; results land
in ./results_demo as curves.csv + summary.json + manifest.json, the same
files `ewmark simulate` writes.  Scale the replicates/T up for smoother
curves (the full protocol uses K=1000, T=700).
"""

import numpy as np

from ewmark.simulate import ExperimentConfig, SpikeConfig, emit_results, run_experiment

cfg = ExperimentConfig(
    spike=SpikeConfig(K=200, delta_max=0.3, T=150, seed=2024),
    replicates=60,
    alpha=0.05,
)
print("running", cfg.replicates, "replicates at K =", cfg.spike.K, "T =", cfg.spike.T, "...")
curves = run_experiment(cfg)

points = [25, 50, 100, 150]
for metric in ("type1", "seq_type1", "type2"):
    print(f"\n{metric}:")
    header = f"  {'detector':>16} " + "".join(f"t={t:>5} " for t in points)
    print(header)
    for name in curves.names:
        vals = curves.rates[name][metric]
        print(f"  {name:>16} " + "".join(f"{vals[t-1]:7.3f}" for t in points))

paths = emit_results(curves, "results_demo")
print("\nwrote:", *paths, sep="\n  ")
