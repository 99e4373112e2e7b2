"""Task-adaptive blend of the global and local scores.

The blend weight is a sigmoid of the (natural) log class count,
``alpha = sigmoid(gamma * ln|C| + beta)``; both score columns are min-max
normalised over the zoo before mixing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FusionError, MissingTruthError, TooFewModelsError, UndefinedCorrelationError
from .ranking import weighted_kendall_tau

LOG = math.log  # task complexity uses the natural log
DEFAULT_GAMMA = 1.0
DEFAULT_BETA = 0.0
DEFAULT_GRID = tuple((g, b) for g in (-2.0, -1.0, 0.0, 1.0, 2.0) for b in (-2.0, -1.0, 0.0, 1.0, 2.0))


@dataclass(frozen=True)
class FusionConfig:
    gamma: float = DEFAULT_GAMMA
    beta: float = DEFAULT_BETA
    num_classes: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.beta)):
            raise FusionError("gamma and beta must be finite")
        if self.num_classes < 1:
            raise FusionError("num_classes must be >= 1")

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "beta": self.beta, "num_classes": self.num_classes, "alpha": gate(self)}


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def gate(cfg: FusionConfig) -> float:
    return sigmoid(cfg.gamma * LOG(cfg.num_classes) + cfg.beta)


def minmax_normalize(values: Sequence[float]) -> list[float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise TooFewModelsError("min-max normalisation needs at least 2 values")
    if not np.isfinite(v).all():
        raise FusionError("cannot normalise non-finite values")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return [0.5] * v.size
    return ((v - lo) / (hi - lo)).tolist()


@dataclass(frozen=True)
class ZooScores:
    entries: tuple[tuple[str, float, float], ...]
    fused: tuple[tuple[str, float], ...]
    alpha: float

    def fused_map(self) -> dict[str, float]:
        return dict(self.fused)

    def column(self, name: str) -> dict[str, float]:
        if name == "fused":
            return self.fused_map()
        k = {"grtd": 1, "lbtc": 2}[name]
        return {e[0]: e[k] for e in self.entries}


def fuse(zoo: Sequence[tuple[str, float, float]], cfg: FusionConfig = FusionConfig(), alpha: float | None = None) -> ZooScores:
    """Blend ``(model_id, grtd, lbtc)`` rows; ``alpha`` overrides the gate."""
    zoo = [(str(m), float(g), float(l)) for m, g, l in zoo]
    if len(zoo) < 2:
        raise TooFewModelsError(f"fusion needs at least 2 models, got {len(zoo)}")
    a = gate(cfg) if alpha is None else float(alpha)
    if not 0.0 <= a <= 1.0:
        raise FusionError(f"alpha must lie in [0, 1], got {a}")
    ng = minmax_normalize([g for _, g, _ in zoo])
    nl = minmax_normalize([l for _, _, l in zoo])
    fused = tuple((m, a * x + (1.0 - a) * y) for (m, _, _), x, y in zip(zoo, ng, nl))
    return ZooScores(tuple(zoo), fused, a)


@dataclass(frozen=True)
class Calibration:
    config: FusionConfig
    tau_w: float
    evaluated: tuple[tuple[float, float, float, float], ...]  # gamma, beta, alpha, tau_w

    def to_dict(self) -> dict:
        return {
            **self.config.to_dict(),
            "pilot_tau_w": self.tau_w,
            "grid": [{"gamma": g, "beta": b, "alpha": a, "tau_w": t} for g, b, a, t in self.evaluated],
        }


def calibrate_pilot(
    pilot: Sequence[tuple[str, float, float, float | None]],
    grid: Sequence[tuple[float, float]] = DEFAULT_GRID,
    num_classes: int = 1,
) -> Calibration:
    """Grid-search ``(gamma, beta)`` for the best pilot weighted tau.

    ``pilot`` rows are ``(model_id, grtd, lbtc, ground_truth)``. Ties go to the
    grid point nearest ``(1, 0)``, then to the lexicographically smallest.
    """
    if not grid:
        raise FusionError("calibration grid is empty")
    missing = [row[0] for row in pilot if row[3] is None]
    if missing:
        raise MissingTruthError(f"pilot models without ground truth: {', '.join(missing)}", model_id=missing[0])
    if len(pilot) < 2:
        raise TooFewModelsError("calibration needs at least 2 pilot models")
    truths = [float(row[3]) for row in pilot]
    rows = [(m, g, l) for m, g, l, _ in pilot]
    evaluated = []
    for gamma, beta in grid:
        cfg = FusionConfig(float(gamma), float(beta), num_classes)
        zoo = fuse(rows, cfg)
        try:
            tau = weighted_kendall_tau([s for _, s in zoo.fused], truths)
        except UndefinedCorrelationError:
            if len(set(truths)) == 1:
                raise
            tau = 0.0  # every fused score tied: the blend carries no ranking
        evaluated.append((cfg.gamma, cfg.beta, zoo.alpha, tau))
    best = min(
        evaluated,
        key=lambda e: (-e[3], math.hypot(e[0] - DEFAULT_GAMMA, e[1] - DEFAULT_BETA), e[0], e[1]),
    )
    return Calibration(FusionConfig(best[0], best[1], num_classes), best[3], tuple(evaluated))
