"""Online detection with an e-process.

Feeds a watermarked stream and an unwatermarked stream through the same
average-construction detector and prints the wealth trajectory.  The
watermarked run crosses 1/alpha and stops; the null run drifts down and
never does, no matter how long we watch it.
"""

import math

import numpy as np

from ewmark import Average, WatermarkKey, new_detector
from ewmark.simulate import SpikeConfig, gen_streams

ALPHA = 0.05
cfg = SpikeConfig(K=200, delta_max=0.5, T=400, seed=21)

for watermarked in (True, False):
    label = "watermarked" if watermarked else "unwatermarked"
    key = WatermarkKey(b"demo detection key", context_window=1)
    records = gen_streams(cfg, watermarked, key)
    detector = new_detector(Average(), alpha=ALPHA)
    print(f"\n--- {label} stream (alpha={ALPHA}, threshold log M >= {math.log(1/ALPHA):.3f}) ---")
    for rec in records:
        verdict = detector.step(rec.y)
        if detector.t % 50 == 0 or verdict.status.value != "running":
            print(f"  t={detector.t:4d}  log M = {detector.log_m:+8.3f}  [{verdict.status.value}]")
        if verdict.status.value != "running":
            break
    verdict = detector.finish()
    print(f"  final: {verdict.to_dict()}")
