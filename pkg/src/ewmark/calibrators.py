"""Calibrators: decreasing densities on [0, 1] that convert p-values to e-values.

Three families live here:

* four named closed forms (``eval_fixed``),
* mixtures ``(1 - lam) + lam * g`` with a data-driven weight
  (``adaptive_lambda`` maximizes past log-wealth over ``[0, gamma]``),
* step functions fitted online as the decreasing-density MLE of past
  p-values (``grenander_fit``), i.e. the left derivative of the least
  concave majorant of their weighted empirical CDF.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression

#: Evaluation floor for calibrators that diverge at p = 0; pivotal values are
#: clamped away from 1 so real inputs never reach it.
P_MIN = 1e-300

_LAMBDA_TOL = 1e-6
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class CalibratorKind(enum.Enum):
    LINEAR = "linear"
    SQRT_INV = "sqrtinv"
    NEG_LOG = "neglog"
    VOVK_SELLKE = "vs"


def _vs_form(p: np.ndarray) -> np.ndarray:
    # (1 - p + p log p) / (p log^2 p); both sides vanish at p = 1, so switch
    # to the series 1/2 + eps/6 + eps^2/8 near that endpoint.
    p = np.asarray(p, dtype=np.float64)
    eps = 1.0 - p
    near_one = eps < 1e-5
    safe = np.where(near_one, 0.5, p)
    lp = np.log(safe)
    direct = (1.0 - safe + safe * lp) / (safe * lp * lp)
    series = 0.5 + eps / 6.0 + eps * eps / 8.0
    return np.where(near_one, series, direct)


def eval_fixed(kind: CalibratorKind, p):
    """Evaluate one of the named calibrators at p-value(s) ``p``."""
    if isinstance(p, (float, int)):
        return _eval_fixed_scalar(kind, float(p))
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(np.isnan(p_arr)):
        raise ValueError("p-value input contains NaN")
    if np.any(p_arr < 0) or np.any(p_arr > 1):
        raise ValueError("p-values must lie in [0, 1]")
    p_c = np.maximum(p_arr, P_MIN)
    if kind is CalibratorKind.LINEAR:
        out = 2.0 * (1.0 - p_arr)
    elif kind is CalibratorKind.SQRT_INV:
        out = 1.0 / np.sqrt(p_c) - 1.0
    elif kind is CalibratorKind.NEG_LOG:
        out = -np.log(p_c)
    elif kind is CalibratorKind.VOVK_SELLKE:
        out = _vs_form(p_c)
    else:
        raise ValueError(f"unknown calibrator kind: {kind!r}")
    return float(out) if p_arr.ndim == 0 else out


def _eval_fixed_scalar(kind: CalibratorKind, p: float) -> float:
    # scalar fast path: the engine evaluates calibrators once per step
    if math.isnan(p):
        raise ValueError("p-value input contains NaN")
    if p < 0.0 or p > 1.0:
        raise ValueError("p-values must lie in [0, 1]")
    pc = p if p > P_MIN else P_MIN
    if kind is CalibratorKind.LINEAR:
        return 2.0 * (1.0 - p)
    if kind is CalibratorKind.SQRT_INV:
        return 1.0 / math.sqrt(pc) - 1.0
    if kind is CalibratorKind.NEG_LOG:
        return -math.log(pc)
    if kind is CalibratorKind.VOVK_SELLKE:
        eps = 1.0 - pc
        if eps < 1e-5:
            return 0.5 + eps / 6.0 + eps * eps / 8.0
        lp = math.log(pc)
        return (1.0 - pc + pc * lp) / (pc * lp * lp)
    raise ValueError(f"unknown calibrator kind: {kind!r}")


@dataclass(frozen=True)
class FixedCalibrator:
    """One of the named closed-form calibrators."""

    kind: CalibratorKind

    def __call__(self, p):
        return eval_fixed(self.kind, p)

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class MixtureCalibrator:
    """``(1 - lam) + lam * g``; still a calibrator for any ``lam`` in [0, 1]."""

    base: FixedCalibrator
    lam: float

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("mixture weight must lie in [0, 1]")

    def __call__(self, p):
        return (1.0 - self.lam) + self.lam * self.base(p)


@dataclass(frozen=True)
class StepCalibrator:
    """Left-continuous decreasing step density on [0, 1].

    ``breakpoints`` are the right edges of the pieces (last is 1.0) and
    ``heights`` the piece values; evaluation at a breakpoint returns the
    piece to its left, and evaluation at 0 returns the first piece.
    """

    breakpoints: np.ndarray
    heights: np.ndarray

    def __call__(self, p):
        p_arr = np.asarray(p, dtype=np.float64)
        if np.any(p_arr < 0) or np.any(p_arr > 1):
            raise ValueError("p-values must lie in [0, 1]")
        idx = np.minimum(
            np.searchsorted(self.breakpoints, p_arr, side="left"),
            len(self.heights) - 1,
        )
        out = self.heights[idx]
        return float(out) if p_arr.ndim == 0 else out

    def integral(self) -> float:
        widths = np.diff(np.concatenate(([0.0], self.breakpoints)))
        return float(self.heights @ widths)

    def to_json(self) -> str:
        return json.dumps(
            {
                "breakpoints": [float(x) for x in self.breakpoints],
                "heights": [float(h) for h in self.heights],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "StepCalibrator":
        obj = json.loads(text)
        return cls(
            breakpoints=np.asarray(obj["breakpoints"], dtype=np.float64),
            heights=np.asarray(obj["heights"], dtype=np.float64),
        )


class PHistory:
    """Arrival-ordered p-values observed so far by one detection stream.

    Backed by an amortized-growth buffer; ``values()`` returns a read-only
    view of the observations so far, refreshed cheaply on every append.
    """

    __slots__ = ("_buf", "_n")

    def __init__(self, values=()):
        self._buf = np.empty(64, dtype=np.float64)
        self._n = 0
        for v in values:
            self.append(v)

    def append(self, p: float) -> None:
        p = float(p)
        if not (0.0 <= p <= 1.0):
            raise ValueError("p-values must lie in [0, 1]")
        if self._n == self._buf.shape[0]:
            grown = np.empty(2 * self._n, dtype=np.float64)
            grown[: self._n] = self._buf
            self._buf = grown
        self._buf[self._n] = p
        self._n += 1

    def __len__(self) -> int:
        return self._n

    def values(self) -> np.ndarray:
        view = self._buf[: self._n]
        view.flags.writeable = False
        return view


def adaptive_lambda(history: PHistory, g: FixedCalibrator, gamma: float = 0.5) -> float:
    """Mixture weight maximizing past log-wealth over ``[0, gamma]``.

    The objective ``sum_s log((1 - lam) + lam * g(p_s))`` is concave, so a
    golden-section search (absolute tolerance 1e-6) finds the maximizer;
    the boundary points are kept as explicit candidates.  Returns 0 on an
    empty history.
    """
    if not (0.0 < gamma <= 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    if len(history) == 0:
        return 0.0
    gm1 = g(history.values()) - 1.0
    buf = np.empty_like(gm1)

    def objective(lam: float) -> float:
        np.multiply(gm1, lam, out=buf)
        with np.errstate(divide="ignore"):
            np.log1p(buf, out=buf)
        return float(buf.sum())

    a, b = 0.0, gamma
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = objective(c), objective(d)
    while (b - a) > _LAMBDA_TOL:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = objective(d)
    mid = 0.5 * (a + b)
    # prefer the smaller weight on exact ties
    cands = [(objective(0.0), -0.0), (fc, -c), (fd, -d), (objective(mid), -mid), (objective(gamma), -gamma)]
    return -max(cands)[1]


def grenander_fit(history: PHistory, variant: str = "ea2") -> StepCalibrator:
    """Decreasing-density MLE of the observed p-values, with endpoint padding.

    ``"ea"`` appends one pseudo p-value at 1 (weight 1); ``"ea2"`` appends
    half-weight pseudo p-values at 0 and 1.  Either way the fit can never
    assign zero mass near 1, so the resulting e-values stay positive.  On an
    empty history both variants return the constant-1 calibrator.
    """
    obs = history.values()
    if variant == "ea":
        pos = np.append(obs, 1.0)
        wts = np.ones(len(obs) + 1)
    elif variant == "ea2":
        pos = np.concatenate((obs, [0.0, 1.0]))
        wts = np.concatenate((np.ones(len(obs)), [0.5, 0.5]))
    else:
        raise ValueError(f"unknown variant: {variant!r} (expected 'ea' or 'ea2')")
    return weighted_grenander(pos, wts)


def weighted_grenander(positions: np.ndarray, weights: np.ndarray) -> StepCalibrator:
    """Weighted Grenander estimator on [0, 1] via pool-adjacent-violators.

    Mass located exactly at 0 is folded into the first positive piece
    (the estimator is taken continuous at 0).  The output integrates to 1
    exactly up to float rounding.
    """
    order = np.argsort(positions, kind="stable")
    xs = positions[order]
    ws = weights[order]
    if xs[0] < 0.0 or xs[-1] > 1.0:
        raise ValueError("positions must lie in [0, 1]")
    total = float(ws.sum())

    is_new = np.empty(len(xs), dtype=bool)
    is_new[0] = True
    is_new[1:] = xs[1:] > xs[:-1]
    gx = xs[is_new]
    gw = np.bincount(np.cumsum(is_new) - 1, weights=ws)

    zero_mass = 0.0
    if gx[0] == 0.0:
        zero_mass = float(gw[0])
        gx, gw = gx[1:], gw[1:]
    if len(gx) == 0:
        raise ValueError("need at least one positive-position observation")
    masses = gw.copy()
    masses[0] += zero_mass
    widths = np.diff(np.concatenate(([0.0], gx)))

    # pool-adjacent-violators on the jump sequence; heights are recomputed
    # from pooled mass over pooled width so the integral is exact
    fit = isotonic_regression(masses / (total * widths), weights=widths, increasing=False)
    starts = fit.blocks[:-1]
    ends = fit.blocks[1:]
    block_mass = np.add.reduceat(masses, starts)
    edges = gx[ends - 1]
    left = np.concatenate(([0.0], edges[:-1]))
    heights = block_mass / (total * (edges - left))

    breakpoints = edges
    if breakpoints[-1] < 1.0:  # zero density beyond the largest observation
        breakpoints = np.append(breakpoints, 1.0)
        heights = np.append(heights, 0.0)
    return StepCalibrator(breakpoints=breakpoints, heights=heights)


def clamp_range(f: StepCalibrator, a: float, b: float) -> StepCalibrator:
    """Approximate range-constrained refit: clamp heights into [a, b], renormalize,
    and iterate to a fixed point.

    This is not the exact constrained MLE; it is an approximation kept behind
    an explicit flag by callers.
    """
    if not (0.0 < a < 1.0 < b):
        raise ValueError("need 0 < a < 1 < b")
    widths = np.diff(np.concatenate(([0.0], f.breakpoints)))
    h = np.asarray(f.heights, dtype=np.float64).copy()
    for _ in range(50):
        h = np.clip(h, a, b)
        integral = float(h @ widths)
        if abs(integral - 1.0) <= 1e-12:
            break
        h = h / integral
    h = np.clip(h, a, b)
    if abs(float(h @ widths) - 1.0) > 1e-9:
        raise ValueError("range clamp failed to renormalize; [a, b] is too tight")
    return StepCalibrator(breakpoints=f.breakpoints.copy(), heights=h)
