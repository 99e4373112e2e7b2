"""Global representation topology divergence.

For each decoder stage the feature-space MST and the label-induced MST are
built over the same sampled points; the stage divergence is the negated
absolute gap between their total weights and the score is the plain mean
over stages. Scores are <= 0, closer to 0 meaning better alignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import GraphError, GrtdError
from .graph import dense_mst, pairwise_distances, semantic_weights
from .types import SampleSet, StageRole

MEDIAN = "median"


@dataclass(frozen=True)
class GrtdConfig:
    """``lam`` is a positive float or ``"median"`` (median inter-class distance).

    ``stages=None`` uses every stage handed to :func:`grtd_score`.
    """

    lam: float | str = MEDIAN
    stages: tuple[StageRole, ...] | None = None
    standardize: bool = False

    def __post_init__(self):
        if self.lam != MEDIAN:
            lam = float(self.lam)
            if not (math.isfinite(lam) and lam > 0):
                raise GrtdError(f"lambda must be 'median' or a positive number, got {self.lam!r}")
            object.__setattr__(self, "lam", lam)
        if self.stages is not None:
            if len(self.stages) == 0:
                raise GrtdError("stage list must not be empty")
            object.__setattr__(self, "stages", tuple(self.stages))


@dataclass(frozen=True)
class StageDivergence:
    stage: StageRole | None
    feat_weight: float
    sem_weight: float
    lam: float

    @property
    def divergence(self) -> float:
        return -abs(self.feat_weight - self.sem_weight)


@dataclass(frozen=True)
class GrtdResult:
    per_stage: tuple[StageDivergence, ...]
    score: float

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "per_stage": [
                {
                    "stage": str(s.stage),
                    "feat_weight": s.feat_weight,
                    "sem_weight": s.sem_weight,
                    "lambda": s.lam,
                    "divergence": s.divergence,
                }
                for s in self.per_stage
            ],
        }


def median_inter_class_distance(dist: np.ndarray, labels: np.ndarray) -> float:
    iu, ju = np.triu_indices(labels.size, k=1)
    cross = labels[iu] != labels[ju]
    if not cross.any():
        raise GrtdError("cannot resolve lambda: the sample has no inter-class pair")
    return float(np.median(dist[iu[cross], ju[cross]]))


def stage_divergence(sample_set: SampleSet, lam: float | str = MEDIAN) -> StageDivergence:
    if len(sample_set) < 2:
        raise GrtdError(f"stage {sample_set.stage}: need at least 2 sampled points")
    dist = pairwise_distances(sample_set.features)
    if lam == MEDIAN:
        lam = median_inter_class_distance(dist, sample_set.labels)
        if lam <= 0:
            # every cross-class pair coincides; any positive cap gives W_sem = 0
            lam = math.ulp(0.0)
    try:
        w_feat = dense_mst(dist).total_weight
        w_sem = dense_mst(semantic_weights(dist, sample_set.labels, lam)).total_weight
    except GraphError as exc:
        raise GrtdError(str(exc)) from exc
    return StageDivergence(sample_set.stage, w_feat, w_sem, float(lam))


def grtd_score(sets: Mapping[StageRole, SampleSet] | Sequence[SampleSet], cfg: GrtdConfig = GrtdConfig()) -> GrtdResult:
    """Score one case from its per-stage sample sets."""
    if not isinstance(sets, Mapping):
        sets = {s.stage: s for s in sets}
    stages = cfg.stages if cfg.stages is not None else sorted(sets, key=lambda s: s.sort_key)
    if not stages:
        raise GrtdError("no decoder stage to score")
    per_stage = []
    for stage in stages:
        if stage not in sets:
            raise GrtdError(f"no sample set for stage {stage}")
        s = sets[stage].standardized() if cfg.standardize else sets[stage]
        per_stage.append(stage_divergence(s, cfg.lam))
    score = math.fsum(p.divergence for p in per_stage) / len(per_stage)
    return GrtdResult(tuple(per_stage), score)


def mean_over_cases(results: Sequence[GrtdResult]) -> float:
    if not results:
        raise GrtdError("no case results to aggregate")
    return math.fsum(r.score for r in results) / len(results)
