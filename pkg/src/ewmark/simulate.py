"""Monte-Carlo error-rate experiments on spike NTP streams.

Each replicate draws a fresh sequence of spike next-token distributions
(one dominant mass ``1 - Delta_t`` with ``Delta_t ~ U(0.001, delta_max)``,
the rest uniform-renormalized), generates an unwatermarked and a watermarked
stream over the same process, and tallies three curves per detector:

* ``type1``     fixed-length false rejection at each prefix length,
* ``seq_type1`` false rejection by each length under first-crossing
  monitoring (nondecreasing in t by construction),
* ``type2``     non-rejection under the alternative: by first crossing for
  e-process detectors (their sequential usage), at fixed length for the
  sum baselines (their fixed-sample usage).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import baselines, engine
from .baselines import SumTestConfig, threshold_table
from .core import PivotalRecord, ProbVector, make_prob_vector
from .gumbel import PseudoUniformVector, WatermarkKey, _decode_from_block


@dataclass(frozen=True)
class SpikeConfig:
    """Spike NTP process: K categories, T steps, spike mass 1 - U(0.001, delta_max)."""

    K: int = 1000
    delta_max: float = 0.2
    T: int = 700
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if not (0.001 < self.delta_max < 1.0):
            raise ValueError("delta_max must lie in (0.001, 1)")
        if self.T < 1:
            raise ValueError("T must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    spike: SpikeConfig
    detectors: tuple | None = None  # None selects the default lineup
    replicates: int = 200
    alpha: float = 0.05
    context_window: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")


def default_detectors(alpha: float):
    """The comparison lineup: both sum baselines and the three adaptive e-processes."""
    return (
        ("ars", SumTestConfig("ars", alpha)),
        ("log", SumTestConfig("log", alpha)),
        ("weight-adaptive", engine.WeightAdaptive()),
        ("og", engine.OG(variant="ea2")),
        ("average", engine.Average()),
    )


def _spike_row(K: int, delta_max: float, rng: np.random.Generator) -> np.ndarray:
    delta = rng.uniform(0.001, delta_max)
    idx = int(rng.integers(0, K))
    rest = rng.uniform(size=K - 1)
    rest *= delta / rest.sum()
    probs = np.empty(K)
    probs[:idx] = rest[:idx]
    probs[idx] = 1.0 - delta
    probs[idx + 1:] = rest[idx:]
    return probs


def gen_spike_ntp(cfg: SpikeConfig, t: int, rng: np.random.Generator) -> ProbVector:
    """One spike NTP draw (``t`` is bookkeeping only; each draw is iid)."""
    return make_prob_vector(_spike_row(cfg.K, cfg.delta_max, rng))


def _replicate_rng(seed: int, rep: int, arm: int) -> np.random.Generator:
    # counter-derived per-replicate streams: deterministic regardless of order
    ss = np.random.SeedSequence(seed, spawn_key=(rep, arm))
    return np.random.Generator(np.random.Philox(ss))


def _replicate_key(seed: int, rep: int, arm: int, context_window: int) -> WatermarkKey:
    material = hashlib.blake2b(
        b"ewmark-experiment" + int(seed).to_bytes(8, "little", signed=True)
        + int(rep).to_bytes(8, "little") + int(arm).to_bytes(8, "little"),
        digest_size=32,
    ).digest()
    return WatermarkKey(material, context_window=context_window)


def gen_stream_records(ntps, watermarked: bool, key: WatermarkKey,
                       rng: np.random.Generator) -> list[PivotalRecord]:
    """Generate pivotal records over a given NTP sequence.

    Watermarked streams couple the token to the keyed uniforms through the
    decoder; unwatermarked streams draw the token independently and still
    evaluate the keyed uniform at it, which realizes the null coupling and
    exercises the full pipeline.
    """
    records = []
    context: list[int] = []
    for t, probs in enumerate(ntps, start=1):
        probs = np.asarray(probs, dtype=np.float64)
        k = probs.shape[0]
        zeta = PseudoUniformVector(key, context, t)
        if watermarked:
            u = zeta.block(k)
            w = _decode_from_block(probs, u)
            y = float(u[w])
        else:
            r = rng.random()
            w = int(min(np.searchsorted(np.cumsum(probs), r), k - 1))
            y = zeta.coordinate(w)
        records.append(PivotalRecord(step=t, token_id=w, y=y))
        context.append(w)
    return records


def gen_streams(cfg: SpikeConfig, watermarked: bool, key: WatermarkKey,
                rng: np.random.Generator | None = None) -> list[PivotalRecord]:
    """Generate one stream of pivotal records over a fresh spike NTP sequence."""
    if rng is None:
        rng = _replicate_rng(cfg.seed, 0, 2 + int(watermarked))
    rows = (_spike_row(cfg.K, cfg.delta_max, rng) for _ in range(cfg.T))
    return gen_stream_records(rows, watermarked, key, rng)


@dataclass(eq=False)
class ErrorCurves:
    """Per-detector error-rate curves over prefix lengths 1..T."""

    names: tuple
    T: int
    alpha: float
    replicates: int
    rates: dict
    config: dict = field(default_factory=dict)

    METRICS = ("type1", "seq_type1", "type2")

    def se(self, name: str, metric: str) -> np.ndarray:
        r = self.rates[name][metric]
        return np.sqrt(r * (1.0 - r) / self.replicates)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ErrorCurves):
            return NotImplemented
        if (self.names, self.T, self.alpha, self.replicates) != (
                other.names, other.T, other.alpha, other.replicates):
            return False
        return all(
            np.array_equal(self.rates[n][m], other.rates[n][m])
            for n in self.names for m in self.METRICS
        )


class _EProcessArm:
    """Monitor-mode log trajectories for one stream, computed lazily.

    When the lineup contains an average detector together with standalone
    copies of its own branches, a single run supplies all three trajectories:
    the average's branch processes are the standalone processes (same history,
    same fits), so their traces are reused rather than recomputed.
    """

    def __init__(self, ys: np.ndarray, detectors, alpha: float):
        self._ys = ys
        self._alpha = alpha
        self._avg_spec = next((d for _, d in detectors if isinstance(d, engine.Average)), None)
        self._avg_state = None
        self._cache: dict[int, np.ndarray] = {}

    def _monitor(self, construction) -> "engine.EProcessState":
        state = engine.new_detector(construction, self._alpha, monitor=True)
        for y in self._ys:
            state.step(y)
        return state

    def logm(self, det) -> np.ndarray:
        key = id(det)
        if key in self._cache:
            return self._cache[key]
        avg = self._avg_spec
        if avg is not None and det in (avg, avg.weight_adaptive, avg.og):
            if self._avg_state is None:
                self._avg_state = self._monitor(avg)
            branches = self._avg_state.branch_log_traces()
            table = {
                avg: np.asarray(self._avg_state.log_trace[1:]),
                avg.weight_adaptive: np.asarray(branches[0][1:]),
                avg.og: np.asarray(branches[1][1:]),
            }
            out = table[det]
        else:
            out = np.asarray(self._monitor(det).log_trace[1:])
        self._cache[key] = out
        return out


def run_experiment(cfg: ExperimentConfig) -> ErrorCurves:
    """Estimate the three error curves for every configured detector.

    Deterministic for a fixed config: replicate streams use counter-derived
    RNG substreams and keys, so results do not depend on execution order.
    """
    detectors = default_detectors(cfg.alpha) if cfg.detectors is None else tuple(cfg.detectors)
    names = tuple(name for name, _ in detectors)
    T = cfg.spike.T
    counts = {
        name: {m: np.zeros(T, dtype=np.int64) for m in ErrorCurves.METRICS}
        for name in names
    }
    log_thr = -math.log(cfg.alpha)
    for rep in range(cfg.replicates):
        key_null = _replicate_key(cfg.spike.seed, rep, 0, cfg.context_window)
        key_alt = _replicate_key(cfg.spike.seed, rep, 1, cfg.context_window)
        null_recs = gen_streams(cfg.spike, False, key_null, _replicate_rng(cfg.spike.seed, rep, 0))
        alt_recs = gen_streams(cfg.spike, True, key_alt, _replicate_rng(cfg.spike.seed, rep, 1))
        null_ys = np.asarray([r.y for r in null_recs])
        alt_ys = np.asarray([r.y for r in alt_recs])
        null_arm = _EProcessArm(null_ys, detectors, cfg.alpha)
        alt_arm = _EProcessArm(alt_ys, detectors, cfg.alpha)

        for name, det in detectors:
            c = counts[name]
            if isinstance(det, SumTestConfig):
                thresholds = threshold_table(det.score, T, cfg.alpha)
                null_sums = np.cumsum(baselines.score_values(null_ys, det.score))
                alt_sums = np.cumsum(baselines.score_values(alt_ys, det.score))
                null_hit = null_sums >= thresholds
                c["type1"] += null_hit
                c["seq_type1"] += np.maximum.accumulate(null_hit)
                c["type2"] += alt_sums < thresholds
            else:
                null_hit = null_arm.logm(det) >= log_thr
                c["type1"] += null_hit
                c["seq_type1"] += np.maximum.accumulate(null_hit)
                rejected_by_t = np.maximum.accumulate(alt_arm.logm(det) >= log_thr)
                c["type2"] += ~rejected_by_t

    rates = {
        name: {m: counts[name][m] / cfg.replicates for m in ErrorCurves.METRICS}
        for name in names
    }
    config = {
        "spike": {"K": cfg.spike.K, "delta_max": cfg.spike.delta_max,
                  "T": cfg.spike.T, "seed": cfg.spike.seed},
        "replicates": cfg.replicates,
        "alpha": cfg.alpha,
        "context_window": cfg.context_window,
        "detectors": [name for name, _ in detectors],
    }
    return ErrorCurves(names=names, T=T, alpha=cfg.alpha, replicates=cfg.replicates,
                       rates=rates, config=config)


def emit_results(curves: ErrorCurves, outdir) -> list[str]:
    """Write curves.csv (long format), summary.json, and manifest.json."""
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "curves.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("detector,t,metric,value,se\n")
        for name in curves.names:
            for metric in ErrorCurves.METRICS:
                vals = curves.rates[name][metric]
                ses = curves.se(name, metric)
                for t in range(1, curves.T + 1):
                    fh.write(f"{name},{t},{metric},{float(vals[t-1])!r},{float(ses[t-1])!r}\n")
            with np.errstate(divide="ignore"):
                logs = np.log10(curves.rates[name]["type2"])
            for t in range(1, curves.T + 1):
                fh.write(f"{name},{t},type2_log10,{float(logs[t-1])!r},\n")

    summary = {
        "detectors": list(curves.names),
        "T": curves.T,
        "alpha": curves.alpha,
        "replicates": curves.replicates,
        "final": {
            name: {m: float(curves.rates[name][m][-1]) for m in ErrorCurves.METRICS}
            for name in curves.names
        },
        "config": curves.config,
    }
    summary_path = os.path.join(outdir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)

    manifest = {
        "config_hash": hashlib.sha256(
            json.dumps(curves.config, sort_keys=True).encode()
        ).hexdigest(),
        "seed": curves.config.get("spike", {}).get("seed"),
        "versions": _versions(),
    }
    manifest_path = os.path.join(outdir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return [csv_path, summary_path, manifest_path]


def read_results(outdir) -> ErrorCurves:
    """Rebuild :class:`ErrorCurves` from an emitted results directory."""
    with open(os.path.join(outdir, "summary.json"), "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    names = tuple(summary["detectors"])
    T = int(summary["T"])
    rates = {name: {m: np.zeros(T) for m in ErrorCurves.METRICS} for name in names}
    with open(os.path.join(outdir, "curves.csv"), "r", encoding="utf-8") as fh:
        header = fh.readline()
        assert header.strip() == "detector,t,metric,value,se"
        for line in fh:
            name, t, metric, value, _se = line.rstrip("\n").split(",")
            if metric in ErrorCurves.METRICS:
                rates[name][metric][int(t) - 1] = float(value)
    return ErrorCurves(names=names, T=T, alpha=float(summary["alpha"]),
                       replicates=int(summary["replicates"]), rates=rates,
                       config=summary.get("config", {}))


def _versions() -> dict:
    import scipy

    from . import __version__

    return {
        "ewmark": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
