"""Independent reference implementations used to check library outputs.

Everything here is deliberately written along a different path from the
library code: brute-force minimax constructions, plain stack PAVA, and
quadrature-based quantiles.
"""

import math

import numpy as np
from scipy import integrate, optimize

from ewmark.core import make_prob_vector


def lcm_reference(positions, weights):
    """Quadratic-time least-concave-majorant construction.

    Returns per-interval heights over the distinct positive positions of the
    augmented sample: height on interval j is the left derivative of the LCM
    of the weighted empirical CDF, computed as the min over left anchors of
    the max over right anchors of chord slopes.  Mass at 0 is folded into
    the cumulative weights (estimator continuous at 0).
    """
    order = np.argsort(positions, kind="stable")
    xs = np.asarray(positions)[order]
    ws = np.asarray(weights)[order]
    total = ws.sum()
    ux = []
    um = []
    for x, w in zip(xs, ws):
        if ux and x == ux[-1]:
            um[-1] += w
        else:
            ux.append(float(x))
            um.append(float(w))
    zero = 0.0
    if ux[0] == 0.0:
        zero = um[0]
        ux, um = ux[1:], um[1:]
    grid = np.concatenate(([0.0], np.asarray(ux)))
    cum = np.concatenate(([0.0], (zero + np.cumsum(um)))) / total
    m = len(ux)
    heights = np.empty(m)
    for j in range(1, m + 1):
        best = math.inf
        for i in range(0, j):
            worst = -math.inf
            for k in range(j, m + 1):
                worst = max(worst, (cum[k] - cum[i]) / (grid[k] - grid[i]))
            best = min(best, worst)
        heights[j - 1] = best
    return np.asarray(ux), heights


def pava_reference(positions, weights):
    """Plain stack-based pool-adjacent-violators on the weighted jump sequence."""
    order = np.argsort(positions, kind="stable")
    xs = np.asarray(positions)[order]
    ws = np.asarray(weights)[order]
    total = ws.sum()
    ux, um = [], []
    for x, w in zip(xs, ws):
        if ux and x == ux[-1]:
            um[-1] += w
        else:
            ux.append(float(x))
            um.append(float(w))
    if ux[0] == 0.0:
        zero = um.pop(0)
        ux.pop(0)
        um[0] += zero
    edges, masses, widths = [], [], []
    prev = 0.0
    for x, mass in zip(ux, um):
        ce, cm, cw = x, mass, x - prev
        while edges and masses[-1] * cw <= cm * widths[-1]:
            edges.pop()
            cm += masses.pop()
            cw += widths.pop()
        edges.append(ce)
        masses.append(cm)
        widths.append(cw)
        prev = x
    heights = np.asarray(masses) / (total * np.asarray(widths))
    return np.asarray(edges), heights


def integration_quantile(shape: float, alpha_upper: float) -> float:
    """Upper quantile of Gamma(shape, 1) via numeric integration of the density."""

    def density(x):
        return math.exp((shape - 1) * math.log(x) - x - math.lgamma(shape))

    hi = shape + 40 * math.sqrt(shape) + 40

    def upper_tail(x):
        val, _ = integrate.quad(density, x, hi, limit=400, points=[shape] if x < shape < hi else None)
        return val

    lo = 1e-12
    return optimize.brentq(lambda x: upper_tail(x) - alpha_upper, lo, hi, xtol=1e-12, rtol=1e-13)


def random_in_delta_simplex(rng, k, delta):
    """Rejection-sample a probability vector with max entry <= 1 - delta."""
    while True:
        p = make_prob_vector(rng.uniform(size=k))
        if p.max_prob() <= 1.0 - delta:
            return p
