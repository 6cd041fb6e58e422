"""Gumbel-max watermarking.

The scheme couples each generated token to a keyed pseudo-uniform vector
``zeta = (U_1, ..., U_K)``: the decoder picks ``argmax_w log(U_w) / P_w``,
which leaves the token distribution exactly ``Cat(P)`` while making the
pivotal value ``Y = U_W`` stochastically larger than uniform.  Without the
coupling (token drawn independently of ``zeta``), ``Y`` is exactly uniform.

Pseudo-randomness is realized with a keyed counter construction: a 128-bit
keyed BLAKE2 hash of (key, recent context, step) seeds a Philox counter RNG,
and coordinate ``w`` is the ``w``-th double of that stream.  This gives O(1)
memory, lazy per-coordinate evaluation, and bit-identical replay.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .core import PivotalRecord, ProbVector

# Outputs are kept strictly inside (0, 1); the generator's doubles already
# satisfy u <= 1 - 2^-53, so only the lower clamp can fire.
_U_LO = 2.0**-64
_U_HI = 1.0 - 2.0**-64


@dataclass(frozen=True)
class WatermarkKey:
    """Shared secret plus the number of previous tokens hashed per step."""

    key_bytes: bytes
    context_window: int = 0

    def __post_init__(self):
        if not self.key_bytes:
            raise ValueError("key_bytes must be nonempty")
        if self.context_window < 0:
            raise ValueError("context_window must be >= 0")

    @classmethod
    def from_hex(cls, key_hex: str, context_window: int = 0) -> "WatermarkKey":
        return cls(bytes.fromhex(key_hex), context_window)


def _hash_material(key: WatermarkKey) -> bytes:
    kb = key.key_bytes
    if len(kb) > 64:  # BLAKE2b key length limit
        kb = hashlib.blake2b(kb).digest()
    return kb


def _philox_key(key: WatermarkKey, context, step: int) -> np.ndarray:
    """128-bit counter key for one step: keyed hash of (recent context, step)."""
    h = hashlib.blake2b(key=_hash_material(key), digest_size=16)
    if key.context_window > 0:
        tail = list(context)[-key.context_window:]
        for tok in tail:
            h.update(int(tok).to_bytes(8, "little"))
    h.update(int(step).to_bytes(8, "little", signed=False))
    return np.frombuffer(h.digest(), dtype=np.uint64)


class PseudoUniformVector:
    """Lazy deterministic map ``w -> U_w in (0, 1)`` for one generation step.

    Coordinates are addressable individually (``coordinate``) or as a prefix
    block (``block``); both views are bit-identical.
    """

    def __init__(self, key: WatermarkKey, context, step: int):
        if step < 1:
            raise ValueError("step must be >= 1")
        self._pkey = _philox_key(key, context, step)

    def coordinate(self, w: int) -> float:
        if w < 0:
            raise ValueError("token id must be >= 0")
        bg = np.random.Philox(key=self._pkey)
        bg.advance(w // 4)  # Philox counter steps cover 4 doubles each
        u = np.random.Generator(bg).random(w % 4 + 1)[-1]
        return min(max(float(u), _U_LO), _U_HI)

    def block(self, k: int) -> np.ndarray:
        u = np.random.Generator(np.random.Philox(key=self._pkey)).random(k)
        return np.clip(u, _U_LO, _U_HI)


def derive_uniform(key: WatermarkKey, context, step: int, w: int) -> float:
    """Deterministic keyed uniform for coordinate ``w`` at one step."""
    return PseudoUniformVector(key, context, step).coordinate(w)


def decode(p: ProbVector, zeta) -> int:
    """Watermark decoder: ``argmax_w log(U_w) / P_w`` over positive-probability tokens.

    ``zeta`` may be a :class:`PseudoUniformVector` or an explicit array of
    per-token uniforms.  Zero-probability coordinates are excluded (score
    -inf); ties break to the smallest index, which matters only on
    measure-zero events.
    """
    u = zeta.block(p.K) if isinstance(zeta, PseudoUniformVector) else np.asarray(zeta, dtype=np.float64)
    return _decode_from_block(p.probs, u)


def _decode_from_block(probs: np.ndarray, u: np.ndarray) -> int:
    with np.errstate(divide="ignore"):
        scores = np.where(probs > 0, np.log(u) / np.where(probs > 0, probs, 1.0), -np.inf)
    return int(np.argmax(scores))


def pivotal(zeta, w: int) -> float:
    """The pivotal statistic ``Y = U_W`` for an observed token."""
    if isinstance(zeta, PseudoUniformVector):
        return zeta.coordinate(w)
    return float(np.asarray(zeta, dtype=np.float64)[w])


@dataclass(frozen=True)
class UnbiasednessResult:
    counts: np.ndarray
    statistic: float
    pvalue: float
    dof: int


def unbiasedness_check(p: ProbVector, n: int, rng_seed: int = 0) -> UnbiasednessResult:
    """Monte-Carlo check that decode frequencies match ``p``.

    Draws ``n`` tokens with fresh keyed pseudo-uniform vectors and returns a
    Pearson chi-square over the categories with expected count >= 5.
    """
    if n < 1000:
        raise ValueError("need n >= 1000 draws for a meaningful check")
    key = WatermarkKey(b"unbiasedness:" + int(rng_seed).to_bytes(8, "little"))
    counts = np.zeros(p.K, dtype=np.int64)
    chunk = max(1, 2**22 // p.K)
    step = 1
    remaining = n
    while remaining > 0:
        m = min(chunk, remaining)
        blocks = np.empty((m, p.K))
        for i in range(m):
            blocks[i] = PseudoUniformVector(key, (), step).block(p.K)
            step += 1
        with np.errstate(divide="ignore"):
            scores = np.where(p.probs > 0, np.log(blocks) / np.where(p.probs > 0, p.probs, 1.0), -np.inf)
        counts += np.bincount(np.argmax(scores, axis=1), minlength=p.K)
        remaining -= m
    expected = n * p.probs
    mask = expected >= 5
    if mask.sum() < 1:
        raise ValueError("no category reaches expected count 5; increase n")
    stat = float(((counts[mask] - expected[mask]) ** 2 / expected[mask]).sum())
    dof = max(int(mask.sum()) - 1, 1)
    pvalue = float(stats.chi2.sf(stat, dof)) if mask.sum() > 1 else 1.0
    return UnbiasednessResult(counts=counts, statistic=stat, pvalue=pvalue, dof=dof)


def alt_cdf(p: ProbVector, y):
    """CDF of the pivotal value under the watermark: ``sum_w P_w * y^(1/P_w)``.

    Zero-probability tokens contribute nothing (the ``y^inf`` convention).
    Accepts a scalar or an array of ``y`` values in [0, 1].
    """
    y_arr = np.asarray(y, dtype=np.float64)
    pos = p.probs[p.probs > 0]
    with np.errstate(divide="ignore"):
        terms = pos * np.power(y_arr[..., None], 1.0 / pos)
    out = terms.sum(axis=-1)
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def alt_density(p: ProbVector, y):
    """Density of the pivotal value under the watermark: ``sum_w y^(1/P_w - 1)``.

    Increasing in ``y`` (strictly unless ``p`` is degenerate), and bounded
    above by ``K`` since every term is at most 1.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    pos = p.probs[p.probs > 0]
    terms = np.power(y_arr[..., None], 1.0 / pos - 1.0)
    out = terms.sum(axis=-1)
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def sample_alt(p: ProbVector, rng: np.random.Generator, size: int | None = None):
    """Sample pivotal values under the watermark by running the decoder itself.

    Draws fresh uniform vectors, decodes, and returns ``U_W``; the sample law
    is exactly :func:`alt_cdf` with no inverse-transform approximation.
    """
    n = 1 if size is None else int(size)
    u = rng.random((n, p.K))
    u = np.clip(u, _U_LO, _U_HI)
    with np.errstate(divide="ignore"):
        scores = np.where(p.probs > 0, np.log(u) / np.where(p.probs > 0, p.probs, 1.0), -np.inf)
    w = np.argmax(scores, axis=1)
    ys = u[np.arange(n), w]
    return float(ys[0]) if size is None else ys


def _density_breakpoints(p: ProbVector) -> list[float]:
    # Terms y^(1/P_w - 1) with tiny P_w live within ~P_w of y=1; seed the
    # adaptive rule with those scales so it cannot overlook the spike.
    pos = np.unique(p.probs[p.probs > 0])
    pts = sorted({float(1.0 - q) for q in pos[:8]} | {float(1.0 - q / 8) for q in pos[:4]})
    return [x for x in pts if 0.0 < x < 1.0]


def kl_alt_uniform(p: ProbVector) -> float:
    """KL divergence of the watermarked pivotal law from uniform, in nats.

    Computed by adaptive quadrature of ``f(y) log f(y)`` with absolute
    tolerance 1e-8.  This is the ceiling on any detector's asymptotic
    growth rate at a fixed NTP vector, and is at most the entropy of ``p``.
    """
    if p.degenerate:
        return 0.0
    pos = p.probs[p.probs > 0]
    exponents = 1.0 / pos - 1.0

    def integrand(y: float) -> float:
        d = float(np.power(y, exponents).sum()) if y > 0 else (1.0 if exponents.min() == 0 else 0.0)
        return d * np.log(d) if d > 0 else 0.0

    val, _ = integrate.quad(
        integrand, 0.0, 1.0, epsabs=1e-8, epsrel=1e-10, limit=200,
        points=_density_breakpoints(p),
    )
    return float(val)


def save_stream_jsonl(path, records) -> None:
    """Write pivotal records as JSONL ``{"step", "token_id", "y"}`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"step": r.step, "token_id": r.token_id, "y": r.y}))
            fh.write("\n")


def load_stream_jsonl(path) -> list[PivotalRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            out.append(parse_stream_record(line, lineno))
    return out


def parse_stream_record(line: str, lineno: int) -> PivotalRecord:
    """Parse one stream line, reporting the line number on any defect."""
    try:
        obj = json.loads(line)
        step = int(obj["step"])
        token_id = int(obj.get("token_id", -1))
        y = float(obj["y"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed stream record at line {lineno}: {exc}") from exc
    if not (0.0 <= y <= 1.0):
        raise ValueError(f"malformed stream record at line {lineno}: y={y} outside [0, 1]")
    return PivotalRecord(step=step, token_id=token_id, y=y)
