"""Calibrators: from fixed closed forms to the online Grenander fit.

Shows the four named calibrators, how the adaptive mixture weight reacts to
evidence, and how the Grenander step function reshapes itself around the
empirical p-value distribution as observations accumulate.
"""

import numpy as np

from ewmark import (
    CalibratorKind,
    FixedCalibrator,
    PHistory,
    adaptive_lambda,
    clamp_range,
    grenander_fit,
    make_prob_vector,
    sample_alt,
)

print("fixed calibrators g(p) at a few p-values:")
ps = np.array([0.01, 0.1, 0.37, 0.8, 1.0])
for kind in CalibratorKind:
    g = FixedCalibrator(kind)
    print(f"  {kind.value:>8}: " + "  ".join(f"g({p:.2f})={g(float(p)):7.3f}" for p in ps))

# adaptive mixture weight: null history keeps lambda near 0, watermark
# evidence pushes it toward the cap
g = FixedCalibrator(CalibratorKind.NEG_LOG)
rng = np.random.default_rng(5)
p_alt = make_prob_vector([0.5, 0.5])
null_hist, alt_hist = PHistory(), PHistory()
print("\nadaptive mixture weight after t observations (gamma = 0.5):")
print(f"  {'t':>6} {'null':>8} {'watermarked':>12}")
for batch in range(5):
    for _ in range(40):
        null_hist.append(float(rng.uniform()))
        alt_hist.append(1.0 - sample_alt(p_alt, rng))
    print(f"  {len(null_hist):>6} {adaptive_lambda(null_hist, g):8.4f} "
          f"{adaptive_lambda(alt_hist, g):12.4f}")

# the online Grenander calibrator is a decreasing step density
print("\nGrenander fit on the watermarked p-values (ea2 padding):")
f = grenander_fit(alt_hist, "ea2")
for right, height in zip(f.breakpoints[:6], f.heights[:6]):
    print(f"  height {height:7.3f} up to p = {right:.4f}")
print(f"  ... {len(f.heights)} pieces, integral = {f.integral():.12f}")

clamped = clamp_range(f, 0.5, 2.0)
print(f"after clamping into [0.5, 2.0]: max height {clamped.heights.max():.3f}, "
      f"integral = {clamped.integral():.9f}")
print("\nserialized step calibrator (truncated):", f.to_json()[:100], "...")
