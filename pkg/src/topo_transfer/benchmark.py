"""Synthetic-zoo ranking benchmark.

Per regime: calibrate ``(gamma, beta)`` on a pilot zoo (its own seed, several
cases), then score fresh zoos and compare GRTD-only, LBTC-only and fused
rankings against the known quality order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .engine import ScoringConfig, score_zoo
from .fusion import DEFAULT_GRID, Calibration, FusionConfig, calibrate_pilot, fuse
from .ranking import weighted_kendall_tau
from .synth import SyntheticZoo, synthetic_zoo

log = logging.getLogger(__name__)

PILOT_CASES = 10
PILOT_SEED = 7_000_001


@dataclass(frozen=True)
class Trial:
    seed: int
    tau_grtd: float
    tau_lbtc: float
    tau_fused: float


@dataclass(frozen=True)
class RegimeReport:
    kind: str
    calibration: Calibration
    trials: tuple[Trial, ...]

    def mean(self, field: str) -> float:
        return sum(getattr(t, field) for t in self.trials) / len(self.trials)

    def count_at_least(self, field: str, threshold: float) -> int:
        return sum(getattr(t, field) >= threshold for t in self.trials)


def calibrate_on_pilot(
    kind: str,
    cfg: ScoringConfig = ScoringConfig(),
    seed: int = PILOT_SEED,
    cases: int = PILOT_CASES,
    models: int = 7,
    grid: Sequence[tuple[float, float]] = DEFAULT_GRID,
) -> Calibration:
    zoo = synthetic_zoo(kind, seed=seed, models=models, cases=cases)
    metrics = score_zoo(zoo, cfg)
    return calibrate_pilot([(m.model_id, m.grtd, m.lbtc, m.truth) for m in metrics], grid, zoo.num_classes)


def run_trial(zoo: SyntheticZoo, fusion: FusionConfig, cfg: ScoringConfig = ScoringConfig()) -> Trial:
    metrics = score_zoo(zoo, cfg)
    truths = [m.truth for m in metrics]
    fused = fuse([(m.model_id, m.grtd, m.lbtc) for m in metrics], fusion)
    return Trial(
        zoo.seed,
        weighted_kendall_tau([m.grtd for m in metrics], truths),
        weighted_kendall_tau([m.lbtc for m in metrics], truths),
        weighted_kendall_tau([s for _, s in fused.fused], truths),
    )


def run_regime(
    kind: str,
    seeds: Sequence[int],
    cfg: ScoringConfig = ScoringConfig(),
    models: int = 7,
    pilot_seed: int = PILOT_SEED,
    pilot_cases: int = PILOT_CASES,
) -> RegimeReport:
    calibration = calibrate_on_pilot(kind, cfg, pilot_seed, pilot_cases, models)
    log.info("%s: calibrated gamma=%g beta=%g", kind, calibration.config.gamma, calibration.config.beta)
    trials = tuple(run_trial(synthetic_zoo(kind, seed=s, models=models), calibration.config, cfg) for s in seeds)
    return RegimeReport(kind, calibration, trials)
