"""Zoo-level scoring: sampling, GRTD, LBTC and fusion wired together.

Everything random is drawn from the label volumes only (stream keys
``(case, 0)`` for voxel sampling and ``(case, 1)`` for anchor selection), so
all models of a zoo are compared on exactly the same voxels and patches.
Model scoring may run on a thread pool; results are always collected in
manifest order, so the thread count never changes the output.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import GrtdError, LbtcError, NoValidPatchError, TooFewModelsError
from .fusion import FusionConfig, fuse
from .grtd import GrtdConfig, GrtdResult, grtd_score, mean_over_cases
from .io import ModelEntry, StageFeatureDump, ZooManifest, load_labels, load_stage_dump
from .lbtc import (
    BoundaryAnchor,
    LbtcConfig,
    LbtcResult,
    LocalPatch,
    PatchLeakage,
    extract_boundary_anchors,
    score_patches,
    select_anchors,
)
from .sampling import SamplingConfig, gather, stratified_indices
from .types import StageKind, StageRole, TransferabilityScore

log = logging.getLogger(__name__)


class ZooSource(Protocol):
    """What the engine needs from a zoo, on disk or in memory."""

    num_classes: int
    num_cases: int

    def model_ids(self) -> list[str]: ...

    def stages(self, model_id: str, kind: StageKind) -> list[StageRole]: ...

    def labels(self, case: int) -> np.ndarray: ...

    def dump(self, model_id: str, stage: StageRole, case: int) -> StageFeatureDump: ...

    def truth(self, model_id: str) -> float | None: ...


class ManifestSource:
    def __init__(self, manifest: ZooManifest):
        self.manifest = manifest
        self.num_classes = manifest.task.num_classes
        self.num_cases = manifest.task.num_cases
        self._entries: dict[str, ModelEntry] = {m.model_id: m for m in manifest.models}
        self._labels: dict[int, np.ndarray] = {}

    def model_ids(self) -> list[str]:
        return [m.model_id for m in self.manifest.models]

    def stages(self, model_id, kind):
        return self._entries[model_id].stages_of(kind)

    def labels(self, case):
        if case not in self._labels:
            self._labels[case] = load_labels(self.manifest.task, case)
        return self._labels[case]

    def dump(self, model_id, stage, case):
        return load_stage_dump(self._entries[model_id], stage, self.manifest.task, case, labels=self.labels(case))

    def truth(self, model_id):
        return self._entries[model_id].ground_truth_performance


@dataclass(frozen=True)
class ScoringConfig:
    sampling: SamplingConfig = SamplingConfig()
    grtd: GrtdConfig = GrtdConfig()
    lbtc: LbtcConfig = LbtcConfig()
    max_cases: int | None = None
    threads: int = 1

    def to_dict(self) -> dict:
        return {
            "sampling": {
                "budget": self.sampling.budget,
                "foreground_fraction": self.sampling.foreground_fraction,
                "seed": self.sampling.seed,
            },
            "grtd": {
                "lambda": self.grtd.lam,
                "stages": None if self.grtd.stages is None else [str(s) for s in self.grtd.stages],
                "standardize": self.grtd.standardize,
            },
            "lbtc": {
                "num_patches": self.lbtc.num_patches,
                "radius": self.lbtc.radius,
                "connectivity": self.lbtc.connectivity,
                "seed": self.lbtc.seed,
                "stages": None if self.lbtc.stages is None else [str(s) for s in self.lbtc.stages],
                "standardize": self.lbtc.standardize,
            },
            "max_cases": self.max_cases,
        }


@dataclass(frozen=True)
class CasePlan:
    case: int
    sample_index: np.ndarray
    patches: tuple[tuple[BoundaryAnchor, np.ndarray], ...]


@dataclass(frozen=True)
class ModelMetrics:
    model_id: str
    grtd: float
    lbtc: float
    grtd_cases: tuple[GrtdResult, ...] = field(repr=False)
    lbtc_result: LbtcResult = field(repr=False)
    truth: float | None = None


def plan_case(labels: np.ndarray, case: int, cfg: ScoringConfig) -> CasePlan:
    idx = stratified_indices(labels, cfg.sampling, case, 0)
    anchors = extract_boundary_anchors(labels, cfg.lbtc.connectivity)
    try:
        chosen = select_anchors(anchors, labels, cfg.lbtc, case, 1)
    except NoValidPatchError:
        log.warning("case %d: no usable boundary patch", case)
        chosen = []
    return CasePlan(case, idx, tuple(chosen))


def _resolve(requested, available, kind: str, model_id: str) -> list[StageRole]:
    if requested is None:
        if not available:
            raise (GrtdError if kind == "decoder" else LbtcError)(f"model {model_id} has no {kind} stage")
        return list(available)
    missing = [s for s in requested if s not in available]
    if missing:
        raise (GrtdError if kind == "decoder" else LbtcError)(
            f"model {model_id} lacks {kind} stage(s) {', '.join(map(str, missing))}"
        )
    return list(requested)


def score_model(source: ZooSource, model_id: str, plans: Sequence[CasePlan], cfg: ScoringConfig) -> ModelMetrics:
    nc = source.num_classes
    dec = _resolve(cfg.grtd.stages, source.stages(model_id, StageKind.DECODER), "decoder", model_id)
    enc = _resolve(cfg.lbtc.stages, source.stages(model_id, StageKind.ENCODER), "encoder", model_id)
    grtd_cases = []
    leaks: list[PatchLeakage] = []
    for plan in plans:
        sets = {}
        for stage in dec:
            sets[stage] = gather(source.dump(model_id, stage, plan.case), plan.sample_index, nc)
        grtd_cases.append(grtd_score(sets, GrtdConfig(cfg.grtd.lam, tuple(dec), cfg.grtd.standardize)))
        for stage in enc:
            dump = source.dump(model_id, stage, plan.case)
            if cfg.lbtc.standardize:
                dump = dump.standardized()
            patches = [LocalPatch(a, gather(dump, idx, nc), cfg.lbtc.radius) for a, idx in plan.patches]
            leaks.extend(score_patches(patches))
    lbtc = LbtcResult.from_patches(leaks)
    log.info("scored %s", model_id)
    return ModelMetrics(
        model_id, mean_over_cases(grtd_cases), lbtc.score, tuple(grtd_cases), lbtc, source.truth(model_id)
    )


def plan_cases(source: ZooSource, cfg: ScoringConfig, cases: Sequence[int] | None = None) -> list[CasePlan]:
    if cases is None:
        n = source.num_cases if cfg.max_cases is None else min(cfg.max_cases, source.num_cases)
        cases = range(n)
    return [plan_case(source.labels(c), c, cfg) for c in cases]


def score_zoo(
    source: ZooSource | ZooManifest, cfg: ScoringConfig = ScoringConfig(), cases: Sequence[int] | None = None
) -> list[ModelMetrics]:
    """Raw GRTD/LBTC for every model, in zoo order."""
    if isinstance(source, ZooManifest):
        source = ManifestSource(source)
    plans = plan_cases(source, cfg, cases)
    ids = source.model_ids()
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(lambda m: score_model(source, m, plans, cfg), ids))
    return [score_model(source, m, plans, cfg) for m in ids]


def fused_scores(metrics: Sequence[ModelMetrics], fusion: FusionConfig) -> list[TransferabilityScore]:
    if len(metrics) < 2:
        raise TooFewModelsError(f"ranking needs at least 2 models, got {len(metrics)}")
    zoo = fuse([(m.model_id, m.grtd, m.lbtc) for m in metrics], fusion)
    return [
        TransferabilityScore(m.model_id, m.grtd, m.lbtc, zoo.alpha, s)
        for m, (_, s) in zip(metrics, zoo.fused)
    ]
