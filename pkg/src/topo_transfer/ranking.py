"""Weighted Kendall's tau between predicted scores and fine-tuned performance.

Weights are hyperbolic and additive, taken from the ground-truth ranking: a
pair ``(i, j)`` counts ``1/(r_i + 1) + 1/(r_j + 1)`` where ``r`` is the 0-based
rank of an item when sorted by decreasing truth (tied truths share the lowest
rank, i.e. ``r_i`` = number of items with strictly larger truth).

Tie rule: a pair tied in either list contributes to neither the numerator
nor the denominator, so

    tau_w = sum_{untied} w_ij * sgn(ds) * sgn(dt) / sum_{untied} w_ij.

Sums are exact (``math.fsum``) and therefore independent of pair order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import MissingTruthError, RankingError, UndefinedCorrelationError


def truth_ranks(truths: Sequence[float]) -> np.ndarray:
    t = np.asarray(truths, dtype=np.float64)
    return (t[None, :] > t[:, None]).sum(axis=1)


def _check(scores, truths) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = np.asarray(truths, dtype=np.float64).reshape(-1)
    if s.size != t.size:
        raise RankingError(f"length mismatch: {s.size} scores vs {t.size} truths")
    if s.size < 2:
        raise RankingError("need at least 2 items")
    if not (np.isfinite(s).all() and np.isfinite(t).all()):
        raise RankingError("scores and truths must be finite")
    if np.all(t == t[0]):
        raise UndefinedCorrelationError("all ground-truth values are equal; tau is undefined")
    return s, t


def _tau(s: np.ndarray, t: np.ndarray, weights: np.ndarray | None) -> float:
    i, j = np.triu_indices(s.size, k=1)
    sign = np.sign(s[i] - s[j]) * np.sign(t[i] - t[j])
    keep = sign != 0
    w = np.ones(i.size) if weights is None else weights[i] + weights[j]
    den = math.fsum(w[keep].tolist())
    if den == 0:
        raise UndefinedCorrelationError("every pair is tied; tau is undefined")
    return math.fsum((w[keep] * sign[keep]).tolist()) / den


def weighted_kendall_tau(scores: Sequence[float], truths: Sequence[float]) -> float:
    s, t = _check(scores, truths)
    return _tau(s, t, 1.0 / (truth_ranks(t) + 1.0))


def kendall_tau(scores: Sequence[float], truths: Sequence[float]) -> float:
    """Unweighted tau under the same tie rule."""
    s, t = _check(scores, truths)
    return _tau(s, t, None)


@dataclass(frozen=True)
class RankingReport:
    pairs: tuple[tuple[str, float, float], ...]
    tau_w: float
    tau_plain: float

    def to_dict(self) -> dict:
        ranks = truth_ranks([p[2] for p in self.pairs]).tolist()
        return {
            "tau_w": self.tau_w,
            "tau_plain": self.tau_plain,
            "pairs": [
                {"model_id": m, "score": s, "truth": t, "truth_rank": r}
                for (m, s, t), r in zip(self.pairs, ranks)
            ],
        }

    def table(self) -> str:
        rows = sorted(self.pairs, key=lambda p: (-p[1], p[0]))
        width = max(8, max(len(p[0]) for p in rows))
        out = [f"{'model':<{width}}  {'score':>12}  {'truth':>8}"]
        out += [f"{m:<{width}}  {s:>12.6f}  {t:>8.4f}" for m, s, t in rows]
        out.append(f"weighted tau = {self.tau_w:.6f}   plain tau = {self.tau_plain:.6f}")
        return "\n".join(out)


def evaluate_zoo(scores: Mapping[str, float], truths: Mapping[str, float | None]) -> RankingReport:
    """Compare per-model scores with ground truth; every scored model needs a truth."""
    pairs = []
    for model_id in sorted(scores):
        truth = truths.get(model_id)
        if truth is None:
            raise MissingTruthError(f"no ground truth for model {model_id!r}", model_id=model_id)
        pairs.append((model_id, float(scores[model_id]), float(truth)))
    s = [p[1] for p in pairs]
    t = [p[2] for p in pairs]
    return RankingReport(tuple(pairs), weighted_kendall_tau(s, t), kendall_tau(s, t))
