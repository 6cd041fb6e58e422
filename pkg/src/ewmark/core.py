"""Shared domain types: probability vectors, pivotal records, and verdicts.

Tokens are plain integer ids in ``[0, K)`` and pivotal values are floats in
``[0, 1]``; only the composite types get dataclasses.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

#: Absolute tolerance on the probability-sum invariant after normalization.
SUM_TOL = 1e-12


@dataclass(frozen=True)
class ProbVector:
    """A next-token distribution over a vocabulary of size ``K >= 2``.

    Entries are nonnegative and sum to 1 (within ``SUM_TOL``).  ``degenerate``
    is set when exactly one entry is positive; degenerate distributions are
    legal inputs everywhere (they carry no watermark signal).

    Instances are immutable; the underlying array is marked read-only.
    Construct through :func:`make_prob_vector`.
    """

    probs: np.ndarray
    degenerate: bool

    @property
    def K(self) -> int:
        return int(self.probs.shape[0])

    def max_prob(self) -> float:
        return float(self.probs.max())

    def to_json(self) -> str:
        return json.dumps([float(x) for x in self.probs])


def make_prob_vector(raw) -> ProbVector:
    """Validate and renormalize ``raw`` into a :class:`ProbVector`.

    Accepts any sequence of >= 2 finite nonnegative reals with positive sum.
    Renormalizes rather than rejecting near-1 sums, since simulation configs
    routinely produce sums off by a few ulps.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ValueError("probability vector needs at least 2 entries")
    if not np.all(np.isfinite(arr)):
        raise ValueError("probability vector entries must be finite")
    if np.any(arr < 0):
        raise ValueError("probability vector entries must be nonnegative")
    total = arr.sum()
    if total <= 0:
        raise ValueError("probability vector must have positive sum")
    probs = arr / total
    probs.flags.writeable = False
    degenerate = int(np.count_nonzero(probs)) == 1
    return ProbVector(probs=probs, degenerate=degenerate)


def entropy(p: ProbVector) -> float:
    """Shannon entropy in nats, with the ``0 * log 0 = 0`` convention."""
    pos = p.probs[p.probs > 0]
    return float(-(pos * np.log(pos)).sum())


def in_delta_simplex(p: ProbVector, delta: float) -> bool:
    """Whether ``max(p) <= 1 - delta``, i.e. the spike mass is bounded away from 1."""
    if not (0.0 < delta <= 1.0 - 1.0 / p.K):
        raise ValueError(f"delta must lie in (0, 1 - 1/K]; got {delta} for K={p.K}")
    return p.max_prob() <= 1.0 - delta


class VerdictStatus(enum.Enum):
    RUNNING = "running"
    REJECTED = "rejected"
    NO_REJECTION = "no_rejection"


@dataclass(frozen=True)
class Verdict:
    """Outcome of an online test.

    ``stop_index`` is the step at which a decision fired (rejection, early
    termination, or horizon), or ``None`` when the stream simply ended.
    ``final_log_m`` is the running product's log value at that point.
    """

    status: VerdictStatus
    stop_index: int | None
    final_log_m: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.status.value,
            "stop_index": self.stop_index,
            "final_log_m": self.final_log_m,
        }


@dataclass(frozen=True)
class PivotalRecord:
    """One step of a (token, pivotal value) stream."""

    step: int
    token_id: int
    y: float


def save_ntp_jsonl(path, vectors) -> None:
    """Write a sequence of probability vectors as one JSON array per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in vectors:
            probs = v.probs if isinstance(v, ProbVector) else np.asarray(v)
            fh.write(json.dumps([float(x) for x in probs]))
            fh.write("\n")


def load_ntp_jsonl(path) -> list[ProbVector]:
    """Read a JSONL file produced by :func:`save_ntp_jsonl`."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(make_prob_vector(json.loads(line)))
    return out
