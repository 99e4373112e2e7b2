"""Shared domain types.

Features are kept as float64 arrays in memory; the on-disk format is float32
(see :mod:`topo_transfer.io`). All containers are frozen and their arrays are
marked read-only so they can be shared between threads.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    LabelOutOfRangeError,
    NonFiniteFeatureError,
    SampleSetError,
)


class StageKind(enum.Enum):
    DECODER = "decoder"
    ENCODER = "encoder"


@dataclass(frozen=True, order=True)
class StageRole:
    """A feature-extraction stage: ``decoder:<i>`` or ``encoder:<i>``."""

    kind: StageKind
    index: int

    def __post_init__(self):
        if not isinstance(self.kind, StageKind):
            object.__setattr__(self, "kind", StageKind(self.kind))
        if int(self.index) != self.index or self.index < 0:
            raise ValueError(f"stage index must be a non-negative integer, got {self.index!r}")

    @classmethod
    def decoder(cls, index: int) -> StageRole:
        return cls(StageKind.DECODER, index)

    @classmethod
    def encoder(cls, index: int) -> StageRole:
        return cls(StageKind.ENCODER, index)

    @classmethod
    def parse(cls, text: str) -> StageRole:
        kind, _, index = text.partition(":")
        return cls(StageKind(kind), int(index))

    @property
    def sort_key(self) -> tuple[str, int]:
        return (self.kind.value, self.index)

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.index}"


@dataclass(frozen=True)
class LabeledPoint:
    features: tuple[float, ...]
    label: int
    voxel_index: tuple[int, int, int]
    stage: StageRole | None = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleSet:
    """An ordered collection of labelled feature vectors from one stage.

    Points are stored column-wise. Construction sorts them by voxel index
    (stable, so insertion order breaks ties) which fixes node numbering for
    every downstream graph and therefore MST tie-breaking.
    """

    features: np.ndarray
    labels: np.ndarray
    voxel_index: np.ndarray
    num_classes: int
    stage: StageRole | None = None
    _sorted: bool = field(default=False, repr=False)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.voxel_index is None:
            vox = np.zeros((labels.size, 3), dtype=np.int64)
            vox[:, 2] = np.arange(labels.size)
        else:
            vox = np.asarray(self.voxel_index, dtype=np.int64).reshape(-1, 3)
        if not (feats.shape[0] == labels.size == vox.shape[0]):
            raise DimensionMismatchError(
                f"column lengths differ: features {feats.shape[0]}, labels {labels.size}, "
                f"voxel_index {vox.shape[0]}"
            )
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if not self._sorted and labels.size > 1:
            order = np.lexsort((vox[:, 2], vox[:, 1], vox[:, 0]))
            feats, labels, vox = feats[order], labels[order], vox[order]
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "voxel_index", _frozen(vox))
        object.__setattr__(self, "_sorted", True)

    @classmethod
    def from_points(cls, points: Iterable[LabeledPoint], num_classes: int) -> SampleSet:
        points = list(points)
        if not points:
            raise SampleSetError("a SampleSet needs at least one point")
        dim = len(points[0].features)
        for i, p in enumerate(points):
            if len(p.features) != dim:
                raise DimensionMismatchError(
                    f"point {i} has feature dimension {len(p.features)}, expected {dim}", index=i
                )
        stages = {p.stage for p in points}
        if len(stages) > 1:
            raise SampleSetError("all points of a SampleSet must come from one stage")
        return cls(
            features=np.array([p.features for p in points], dtype=np.float64).reshape(len(points), dim),
            labels=np.array([p.label for p in points]),
            voxel_index=np.array([p.voxel_index for p in points]),
            num_classes=num_classes,
            stage=stages.pop(),
        )

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @cached_property
    def points(self) -> tuple[LabeledPoint, ...]:
        return tuple(
            LabeledPoint(tuple(f), int(y), tuple(int(v) for v in vox), self.stage)
            for f, y, vox in zip(self.features.tolist(), self.labels.tolist(), self.voxel_index)
        )

    def present_classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, index: Sequence[int] | np.ndarray) -> SampleSet:
        index = np.asarray(index, dtype=np.int64)
        return SampleSet(
            self.features[index], self.labels[index], self.voxel_index[index],
            self.num_classes, self.stage,
        )

    def standardized(self) -> SampleSet:
        """Per-feature z-scoring; constant features are left centred at 0."""
        mu = self.features.mean(axis=0)
        sd = self.features.std(axis=0)
        sd[sd == 0] = 1.0
        return SampleSet(
            (self.features - mu) / sd, self.labels, self.voxel_index,
            self.num_classes, self.stage, _sorted=True,
        )

    # serialization keeps the stored order so a round trip is exact
    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "stage": None if self.stage is None else str(self.stage),
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "voxel_index": self.voxel_index.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> SampleSet:
        stage = data.get("stage")
        n = len(data["labels"])
        feats = np.array(data["features"], dtype=np.float64).reshape(n, -1)
        return cls(
            feats, data["labels"], data["voxel_index"], int(data["num_classes"]),
            None if stage is None else StageRole.parse(stage),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SampleSet:
        return cls.from_dict(json.loads(text))


def validate_sample_set(sample_set: SampleSet) -> None:
    """Check every point invariant; raise on the first violation.

    Raises one of :class:`DimensionMismatchError`,
    :class:`NonFiniteFeatureError` or :class:`LabelOutOfRangeError`, each
    carrying the offending point index. Returns ``None`` when the set is valid.
    """
    feats = sample_set.features
    if feats.ndim != 2 or feats.shape[1] < 1:
        raise DimensionMismatchError("features must have dimension >= 1", index=0)
    finite = np.isfinite(feats).all(axis=1)
    labels = sample_set.labels
    bad_label = (labels < 0) | (labels >= sample_set.num_classes)
    # report whichever violation comes first in point order
    bad = np.flatnonzero(~finite | bad_label)
    if bad.size == 0:
        return None
    i = int(bad[0])
    if not finite[i]:
        raise NonFiniteFeatureError(f"point {i} has a non-finite feature value", index=i)
    raise LabelOutOfRangeError(
        f"point {i} has label {int(labels[i])}, num_classes is {sample_set.num_classes}", index=i
    )


@dataclass(frozen=True)
class TransferabilityScore:
    model_id: str
    grtd: float
    lbtc: float
    alpha: float
    fused: float

    def __post_init__(self):
        if not self.grtd <= 0:
            raise ValueError(f"grtd must be <= 0, got {self.grtd}")
        if not 0.0 <= self.lbtc <= 1.0:
            raise ValueError(f"lbtc must lie in [0, 1], got {self.lbtc}")
        # a float sigmoid saturates to exactly 0.0 or 1.0 for large arguments
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (0.0 <= self.fused <= 1.0 or math.isnan(self.fused)):
            raise ValueError(f"fused must lie in [0, 1], got {self.fused}")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "grtd": self.grtd,
            "lbtc": self.lbtc,
            "alpha": self.alpha,
            "fused": self.fused,
        }
