"""E-process constructions and the online stopping rule.

A detector multiplies per-step e-values ``E_t = f_t(1 - Y_t)`` into a running
product ``M_t``, where each calibrator ``f_t`` is fitted from strictly prior
observations.  Rejection fires the first time ``M_t >= 1/alpha``; optional
early termination fires when ``M_t < beta`` or a step horizon is reached.
The running product is a nonnegative supermartingale under the null, so the
first-crossing rule is valid at any data-dependent stopping time.

Everything is maintained in log domain: products span hundreds of orders of
magnitude over a few hundred steps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .calibrators import (
    CalibratorKind,
    FixedCalibrator,
    PHistory,
    adaptive_lambda,
    clamp_range,
    grenander_fit,
)
from .core import Verdict, VerdictStatus, make_prob_vector
from .gumbel import alt_density


@dataclass(frozen=True)
class Nonadaptive:
    """Fixed calibrator mixed with a pre-specified weight."""

    g: CalibratorKind = CalibratorKind.NEG_LOG
    lam: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lambda must lie in [0, 1]")


@dataclass(frozen=True)
class WeightAdaptive:
    """Fixed calibrator with the mixture weight refit from past log-wealth."""

    g: CalibratorKind = CalibratorKind.NEG_LOG
    gamma: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class OG:
    """Online Grenander calibrator, refit each step from past p-values."""

    variant: str = "ea2"
    og_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.variant not in ("ea", "ea2"):
            raise ValueError("variant must be 'ea' or 'ea2'")
        if self.og_range is not None:
            a, b = self.og_range
            if not (0.0 < a < 1.0 < b):
                raise ValueError("range must satisfy 0 < a < 1 < b")


@dataclass(frozen=True)
class Average:
    """Convex combination of the weight-adaptive and OG wealth processes."""

    weight_adaptive: WeightAdaptive = WeightAdaptive()
    og: OG = OG()
    weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        w1, w2 = self.weights
        if w1 <= 0 or w2 <= 0 or abs(w1 + w2 - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")


Construction = Nonadaptive | WeightAdaptive | OG | Average


class _Branch:
    """One wealth process: fits a calibrator per step and accumulates log M."""

    __slots__ = ("spec", "log_m", "log_trace", "record", "_g", "_static_fit")

    def __init__(self, spec, record: bool = True):
        self.spec = spec
        self.log_m = 0.0
        self.log_trace = [0.0]
        self.record = record
        self._g = FixedCalibrator(spec.g) if isinstance(spec, (Nonadaptive, WeightAdaptive)) else None
        self._static_fit = None
        if isinstance(spec, Nonadaptive):  # history-independent, fit once
            g, lam = self._g, spec.lam
            self._static_fit = lambda p: (1.0 - lam) + lam * g(p)

    def fit(self, history: PHistory):
        spec = self.spec
        if self._static_fit is not None:
            return self._static_fit
        if isinstance(spec, WeightAdaptive):
            g = self._g
            lam = adaptive_lambda(history, g, spec.gamma)
            return lambda p: (1.0 - lam) + lam * g(p)
        f = grenander_fit(history, spec.variant)
        if spec.og_range is not None:
            f = clamp_range(f, *spec.og_range)
        return f

    def update(self, e: float) -> None:
        self.log_m += math.log(e) if e > 0.0 else -math.inf
        if self.record:
            self.log_trace.append(self.log_m)
        else:
            self.log_trace[-1] = self.log_m


@dataclass
class TraceRow:
    t: int
    y: float
    e_value: float
    log_m: float
    verdict: str


class EProcessState:
    """Mutable state of one online detection stream.

    Owns the observation history and per-branch log-wealth.  ``monitor=True``
    keeps updating past any decision (for error-curve estimation) and never
    freezes the state.
    """

    def __init__(self, construction: Construction, alpha: float, beta: float = 0.0,
                 horizon: int | None = None, monitor: bool = False,
                 record_trace: bool = True):
        if not (0.0 < alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if not (0.0 <= beta < 1.0):
            raise ValueError("beta must lie in [0, 1)")
        if horizon is not None and horizon < 1:
            raise ValueError("horizon must be >= 1")
        if isinstance(construction, Average):
            self._branches = [_Branch(construction.weight_adaptive, record_trace),
                              _Branch(construction.og, record_trace)]
            self._weights = construction.weights
        elif isinstance(construction, (Nonadaptive, WeightAdaptive, OG)):
            self._branches = [_Branch(construction, record_trace)]
            self._weights = (1.0,)
        else:
            raise ValueError(f"unknown construction: {construction!r}")
        self.construction = construction
        self.alpha = alpha
        self.beta = beta
        self.horizon = horizon
        self.monitor = monitor
        # with record_trace off, only the latest trace point and row are kept
        # (constant memory aside from the calibrators' own history)
        self.record_trace = record_trace
        self.t = 0
        self.history = PHistory()
        self.verdict = Verdict(VerdictStatus.RUNNING, None, 0.0)
        self.log_trace = [0.0]
        self.rows: list[TraceRow] = []

    @property
    def log_m(self) -> float:
        if len(self._branches) == 1:
            return self._branches[0].log_m
        (w1, w2), (b1, b2) = self._weights, self._branches
        return float(np.logaddexp(math.log(w1) + b1.log_m, math.log(w2) + b2.log_m))

    def branch_log_traces(self) -> list[list[float]]:
        return [list(b.log_trace) for b in self._branches]

    def step(self, y: float) -> Verdict:
        """Advance one observation; returns the (possibly terminal) verdict."""
        if self.verdict.status is not VerdictStatus.RUNNING and not self.monitor:
            raise RuntimeError("detector already terminated; use monitor mode to keep updating")
        if self.horizon is not None and self.t >= self.horizon:
            raise RuntimeError("horizon reached")
        y = float(y)
        if not (0.0 <= y <= 1.0):
            raise ValueError("pivotal value y must lie in [0, 1]")

        # calibrators are fitted from history only, before y is consumed
        fits = [br.fit(self.history) for br in self._branches]
        prev_log_m = self.log_m
        p = 1.0 - y
        es = [float(f(p)) for f in fits]
        for br, e in zip(self._branches, es):
            br.update(e)
        self.t += 1
        log_m = self.log_m
        if self.record_trace:
            self.log_trace.append(log_m)
        else:
            self.log_trace[-1] = log_m
        # single branch: the e-value itself; average: the effective step ratio
        e_value = es[0] if len(self._branches) == 1 else float(np.exp(log_m - prev_log_m))

        if not self.monitor and self.verdict.status is VerdictStatus.RUNNING:
            if log_m >= -math.log(self.alpha):
                self.verdict = Verdict(VerdictStatus.REJECTED, self.t, log_m)
            elif self.beta > 0.0 and log_m < math.log(self.beta):
                self.verdict = Verdict(VerdictStatus.NO_REJECTION, self.t, log_m)
            elif self.horizon is not None and self.t >= self.horizon:
                self.verdict = Verdict(VerdictStatus.NO_REJECTION, self.t, log_m)

        row = TraceRow(self.t, y, e_value, log_m, self.verdict.status.value)
        if self.record_trace or not self.rows:
            self.rows.append(row)
        else:
            self.rows[-1] = row
        self.history.append(p)
        return self.verdict

    def finish(self) -> Verdict:
        """Declare end of stream: a still-running detector reports no rejection."""
        if self.verdict.status is VerdictStatus.RUNNING:
            self.verdict = Verdict(VerdictStatus.NO_REJECTION, None, self.log_m)
        return self.verdict


def new_detector(construction: Construction, alpha: float, beta: float = 0.0,
                 horizon: int | None = None, monitor: bool = False) -> EProcessState:
    """Fresh detector at ``t = 0`` with ``M_0 = 1``."""
    return EProcessState(construction, alpha, beta=beta, horizon=horizon, monitor=monitor)


def run(ys, construction: Construction, alpha: float, beta: float = 0.0,
        horizon: int | None = None, monitor: bool = False) -> tuple[Verdict, list[float]]:
    """Run the online test over a pivotal-value stream.

    Returns the final verdict and the full log-trajectory ``[log M_0, ...]``.
    Without ``monitor``, processing stops at the first decisive verdict.
    """
    state = new_detector(construction, alpha, beta=beta, horizon=horizon, monitor=monitor)
    for y in ys:
        verdict = state.step(y)
        if verdict.status is not VerdictStatus.RUNNING and not monitor:
            return verdict, state.log_trace
        if state.horizon is not None and state.t >= state.horizon:
            break
    return state.finish(), state.log_trace


def growth_rate(log_trace) -> float:
    """Final average log growth ``log(M_T) / T`` of a trajectory."""
    if len(log_trace) < 2:
        raise ValueError("need a trace with at least 2 points (T >= 1)")
    return float(log_trace[-1]) / (len(log_trace) - 1)


def find_lambda0(delta: float, g: FixedCalibrator | CalibratorKind) -> float:
    """A mixture weight with provably positive drift at the worst-case NTP.

    Against the extremal vector ``P* = (1 - delta, delta, 0, ...)`` the drift
    ``phi(lam) = E[log((1 - lam) + lam g(1 - Y))]`` is concave with
    ``phi(0) = 0``; this scans a 1000-point grid for the largest positive
    point and halves it as a guard against quadrature error.
    """
    if not (0.0 < delta <= 0.5):
        raise ValueError("delta must lie in (0, 1/2]")
    if isinstance(g, CalibratorKind):
        g = FixedCalibrator(g)
    pstar = make_prob_vector([1.0 - delta, delta])

    def phi(lam: float) -> float:
        def integrand(y: float) -> float:
            return alt_density(pstar, y) * math.log((1.0 - lam) + lam * g(1.0 - y))

        val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10,
                                limit=200, points=[1.0 - delta, 1.0 - delta / 8])
        return float(val)

    # concavity with phi(0) = 0 makes {phi > 0} an interval starting at 0
    if phi(1.0 / 1000) <= 0.0:
        raise ValueError("no positive lambda found on the grid; "
                         "calibrator is effectively constant or delta too extreme")
    lo, hi = 1, 1000  # grid indices; phi(lo/1000) > 0, phi(hi/1000) treated as <= 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if phi(mid / 1000) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo / 1000 / 2.0


# --- detector config (shared by the CLI and foreign-function callers) ------

_CONSTRUCTION_NAMES = ("nonadaptive", "weight-adaptive", "og", "average")


def detector_from_config(cfg: dict, monitor: bool = False,
                         record_trace: bool = True) -> EProcessState:
    """Build a detector from the JSON config schema, naming fields on errors."""
    known = {"construction", "g", "gamma", "lambda", "variant", "range",
             "alpha", "beta", "horizon"}
    for k in cfg:
        if k not in known:
            raise ValueError(f"unknown config field: {k!r}")
    name = cfg.get("construction", "average")
    if name not in _CONSTRUCTION_NAMES:
        raise ValueError(f"construction must be one of {_CONSTRUCTION_NAMES}; got {name!r}")
    try:
        g = CalibratorKind(cfg.get("g", "neglog"))
    except ValueError:
        raise ValueError(f"g must be one of {[k.value for k in CalibratorKind]}; "
                         f"got {cfg.get('g')!r}") from None
    gamma = float(cfg.get("gamma", 0.5))
    lam = float(cfg.get("lambda", 0.5))
    variant = cfg.get("variant", "ea2")
    rng_range = cfg.get("range")
    og_range = None if rng_range is None else (float(rng_range[0]), float(rng_range[1]))

    alpha = float(cfg.get("alpha", 0.05))
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1); got {alpha}")
    beta = float(cfg.get("beta", 0.0))
    if not (0.0 <= beta < 1.0):
        raise ValueError(f"beta must lie in [0, 1); got {beta}")
    horizon = cfg.get("horizon")
    horizon = None if horizon is None else int(horizon)
    if horizon is not None and horizon < 1:
        raise ValueError(f"horizon must be >= 1; got {horizon}")

    try:
        if name == "nonadaptive":
            construction: Construction = Nonadaptive(g=g, lam=lam)
        elif name == "weight-adaptive":
            construction = WeightAdaptive(g=g, gamma=gamma)
        elif name == "og":
            construction = OG(variant=variant, og_range=og_range)
        else:
            construction = Average(weight_adaptive=WeightAdaptive(g=g, gamma=gamma),
                                   og=OG(variant=variant, og_range=og_range))
    except ValueError as exc:
        raise ValueError(str(exc)) from None
    return EProcessState(construction, alpha, beta=beta, horizon=horizon,
                         monitor=monitor, record_trace=record_trace)


def construction_name(c: Construction) -> str:
    return {Nonadaptive: "nonadaptive", WeightAdaptive: "weight-adaptive",
            OG: "og", Average: "average"}[type(c)]


def write_trace_csv(path_or_fh, rows) -> None:
    """Trace CSV with columns (t, y, e_value, log_m, verdict)."""
    own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
    fh = open(path_or_fh, "w", newline="", encoding="utf-8") if own else path_or_fh
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "y", "e_value", "log_m", "verdict"])
        for r in rows:
            writer.writerow([r.t, repr(r.y), repr(r.e_value), repr(r.log_m), r.verdict])
    finally:
        if own:
            fh.close()
