"""Local boundary-aware topological consistency.

Boundary anchors are voxels with a differently-labelled neighbour (the
morphological gradient of the label field). Around a random subset of anchors
a cubic window is cut out, its voxels are embedded with the encoder-stage
features, and the native MST of that window is inspected: the leakage rate is
the fraction of its edges that join two different labels. The score is one
minus the mean leakage over all retained windows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LbtcError, NoValidPatchError
from .graph import dense_mst, pairwise_distances
from .io import StageFeatureDump
from .sampling import gather, make_rng
from .types import SampleSet, StageRole

DEFAULT_PATCHES = 64
DEFAULT_RADIUS = 2
DEFAULT_CONNECTIVITY = 6


def neighbour_offsets(connectivity: int) -> list[tuple[int, int, int]]:
    if connectivity == 6:
        return [o for o in itertools.product((-1, 0, 1), repeat=3) if sum(map(abs, o)) == 1]
    if connectivity == 26:
        return [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)]
    raise LbtcError(f"connectivity must be 6 or 26, got {connectivity}")


@dataclass(frozen=True)
class BoundaryAnchor:
    voxel_index: tuple[int, int, int]
    classes_adjacent: frozenset[int]


@dataclass(frozen=True)
class LocalPatch:
    anchor: BoundaryAnchor
    points: SampleSet
    radius: int


@dataclass(frozen=True)
class LbtcConfig:
    num_patches: int = DEFAULT_PATCHES
    radius: int = DEFAULT_RADIUS
    connectivity: int = DEFAULT_CONNECTIVITY
    stages: tuple[StageRole, ...] | None = None
    seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if self.num_patches < 1:
            raise LbtcError("num_patches must be >= 1")
        if self.radius < 1:
            raise LbtcError("radius must be >= 1")
        neighbour_offsets(self.connectivity)
        if self.stages is not None:
            object.__setattr__(self, "stages", tuple(self.stages))


@dataclass(frozen=True)
class PatchLeakage:
    stage: StageRole | None
    anchor: tuple[int, int, int]
    rho: float
    num_points: int
    cross_edges: int


@dataclass(frozen=True)
class LbtcResult:
    per_patch: tuple[PatchLeakage, ...]
    score: float

    @classmethod
    def from_patches(cls, patches: Sequence[PatchLeakage]) -> LbtcResult:
        if not patches:
            raise NoValidPatchError("no valid boundary patch to score")
        return cls(tuple(patches), 1.0 - math.fsum(p.rho for p in patches) / len(patches))

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "num_patches": len(self.per_patch),
            "per_patch": [
                {"stage": str(p.stage), "anchor": list(p.anchor), "rho": p.rho, "n": p.num_points}
                for p in self.per_patch
            ],
        }


# -- anchors ----------------------------------------------------------------


def shifted_views(shape, offset):
    """Slices ``(src, dst)`` such that ``a[dst]`` is the neighbour of ``a[src]`` at ``offset``."""
    src, dst = [], []
    for o, n in zip(offset, shape):
        if o >= 0:
            src.append(slice(0, n - o))
            dst.append(slice(o, n))
        else:
            src.append(slice(-o, n))
            dst.append(slice(0, n + o))
    return tuple(src), tuple(dst)


def boundary_mask(labels: np.ndarray, connectivity: int = DEFAULT_CONNECTIVITY) -> np.ndarray:
    labels = np.asarray(labels)
    mask = np.zeros(labels.shape, dtype=bool)
    for off in neighbour_offsets(connectivity):
        src, dst = shifted_views(labels.shape, off)
        mask[src] |= labels[src] != labels[dst]
    return mask


def _adjacent_classes(labels: np.ndarray, voxel, offsets) -> frozenset[int]:
    x, y, z = voxel
    shape = labels.shape
    classes = {int(labels[x, y, z])}
    for dx, dy, dz in offsets:
        a, b, c = x + dx, y + dy, z + dz
        if 0 <= a < shape[0] and 0 <= b < shape[1] and 0 <= c < shape[2]:
            classes.add(int(labels[a, b, c]))
    return frozenset(classes)


def extract_boundary_anchors(labels: np.ndarray, connectivity: int = DEFAULT_CONNECTIVITY) -> list[BoundaryAnchor]:
    """All boundary voxels in C order, each with the labels it touches."""
    labels = np.asarray(labels)
    if labels.ndim != 3 or labels.size == 0:
        raise LbtcError(f"labels must be a non-empty 3-D array, got shape {labels.shape}")
    offsets = neighbour_offsets(connectivity)
    coords = np.argwhere(boundary_mask(labels, connectivity))
    return [
        BoundaryAnchor(tuple(int(v) for v in c), _adjacent_classes(labels, c, offsets))
        for c in coords.tolist()
    ]


# -- patches ----------------------------------------------------------------


def window_indices(center, radius: int, shape) -> np.ndarray:
    """Flat C-order indices of the Chebyshev ball around ``center``, clipped."""
    axes = [np.arange(max(c - radius, 0), min(c + radius, n - 1) + 1) for c, n in zip(center, shape)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index([g.reshape(-1) for g in grid], shape)


def select_anchors(
    anchors: Sequence[BoundaryAnchor], labels: np.ndarray, cfg: LbtcConfig, *stream: int
) -> list[tuple[BoundaryAnchor, np.ndarray]]:
    """Draw up to ``num_patches`` anchors whose windows hold >= 2 labels.

    Anchors are visited in a seeded random order (sampling without
    replacement); unusable windows are skipped and replaced by the next draw.
    Returns ``(anchor, window flat indices)`` sorted by anchor position.
    """
    if not anchors:
        raise NoValidPatchError("no boundary anchors")
    flat = np.asarray(labels).reshape(-1)
    rng = make_rng(cfg.seed, *stream)
    chosen = []
    for k in rng.permutation(len(anchors)).tolist():
        anchor = anchors[k]
        idx = window_indices(anchor.voxel_index, cfg.radius, labels.shape)
        if idx.size < 2 or np.unique(flat[idx]).size < 2:
            continue
        chosen.append((anchor, idx))
        if len(chosen) == cfg.num_patches:
            break
    if not chosen:
        raise NoValidPatchError("no boundary window contains two labels")
    chosen.sort(key=lambda item: item[0].voxel_index)
    return chosen


def sample_patches(
    anchors: Sequence[BoundaryAnchor],
    dump: StageFeatureDump,
    cfg: LbtcConfig,
    num_classes: int | None = None,
    stream: tuple[int, ...] = (),
) -> list[LocalPatch]:
    if num_classes is None:
        num_classes = int(dump.labels.max()) + 1
    return [
        LocalPatch(anchor, gather(dump, idx, num_classes), cfg.radius)
        for anchor, idx in select_anchors(anchors, dump.labels, cfg, *stream)
    ]


# -- leakage ----------------------------------------------------------------


def leakage_rate(points: SampleSet | LocalPatch) -> float:
    """Fraction of native-MST edges that join points of different labels."""
    return _leakage(points)[0]


def _leakage(points: SampleSet | LocalPatch) -> tuple[float, int]:
    if isinstance(points, LocalPatch):
        points = points.points
    n = len(points)
    if n < 2:
        raise LbtcError(f"leakage needs at least 2 points, got {n}")
    tree = dense_mst(pairwise_distances(points.features))
    y = points.labels
    cross = int(np.count_nonzero(y[tree.i] != y[tree.j]))
    return cross / (n - 1), cross


def score_patches(patches: Sequence[LocalPatch]) -> list[PatchLeakage]:
    out = []
    for p in patches:
        rho, cross = _leakage(p)
        out.append(PatchLeakage(p.points.stage, p.anchor.voxel_index, rho, len(p.points), cross))
    return out


def lbtc_score(
    dumps: Sequence[StageFeatureDump],
    labels: np.ndarray | None = None,
    cfg: LbtcConfig = LbtcConfig(),
    num_classes: int | None = None,
    stream: tuple[int, ...] = (),
    anchors: Sequence[BoundaryAnchor] | None = None,
) -> LbtcResult:
    """Score one case: leakage over the same anchors at every encoder stage."""
    if not dumps:
        raise LbtcError("no encoder stage dumps")
    if labels is None:
        labels = dumps[0].labels
    if cfg.stages is not None:
        by_stage = {d.stage: d for d in dumps}
        missing = [s for s in cfg.stages if s not in by_stage]
        if missing:
            raise LbtcError(f"missing encoder stages {', '.join(map(str, missing))}")
        dumps = [by_stage[s] for s in cfg.stages]
    if anchors is None:
        anchors = extract_boundary_anchors(labels, cfg.connectivity)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    selected = select_anchors(anchors, labels, cfg, *stream)
    leaks: list[PatchLeakage] = []
    for dump in dumps:
        patches = [LocalPatch(a, gather(dump, idx, num_classes), cfg.radius) for a, idx in selected]
        leaks.extend(score_patches(patches))
    return LbtcResult.from_patches(leaks)


def pool(results: Sequence[LbtcResult]) -> LbtcResult:
    """Pool patches from several cases into one score."""
    return LbtcResult.from_patches([p for r in results for p in r.per_patch])
