"""Synthetic model zoos with a known quality ordering.

A task is a label volume: *fragmented* tasks scatter many small blobs,
*structured* tasks place a few large regions. A model is a scalar
``quality`` in [0, 1]; its features are class centroids (a regular simplex
with edge ``separation``) plus

* bulk Gaussian noise, ``sigma = noise_sigma * (1 - quality) + sigma_min``;
* boundary confusion: each boundary voxel independently takes the centroid
  of a neighbouring class instead of its own with probability
  ``boundary_mixing * (1 - quality)``.

Ground-truth Dice is an increasing function of quality. On top of that every
model carries idiosyncrasies that do not affect its Dice: a log-normal
factor on the bulk noise (``global_jitter``) and on the boundary confusion
rate (``boundary_jitter``). Which one is large is what distinguishes the regimes:
fragmented targets are all boundary, so idiosyncratic bulk geometry is
irrelevant to segmentation; structured targets are dominated by their bulk,
so idiosyncratic boundary blur is.

Stage ``k`` (decoder or encoder) lives on a grid downsampled by ``2**k`` via
average pooling.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .io import StageFeatureDump, TaskDescriptor, write_blob
from .lbtc import boundary_mask, neighbour_offsets, shifted_views
from .sampling import RNG_ALGORITHM, make_rng
from .types import StageKind, StageRole

FRAGMENTED = "fragmented"
STRUCTURED = "structured"
DEFAULT_STAGES = (StageRole.decoder(0), StageRole.decoder(1), StageRole.encoder(0), StageRole.encoder(1))


@dataclass(frozen=True)
class SynthRegime:
    kind: str
    num_classes: int
    component_count: int
    noise_sigma: float
    separation: float
    boundary_mixing: float
    global_jitter: float
    boundary_jitter: float
    sigma_min: float = 0.05
    shape: tuple[int, int, int] = (32, 32, 32)
    feature_dim: int = 16

    def __post_init__(self):
        if self.kind not in (FRAGMENTED, STRUCTURED):
            raise ConfigError(f"unknown regime {self.kind!r}")
        if self.num_classes < 2:
            raise ConfigError("a synthetic task needs at least 2 classes")
        if self.feature_dim < self.num_classes:
            raise ConfigError("feature_dim must be >= num_classes for simplex centroids")
        if self.noise_sigma < 0 or self.separation <= 0 or self.sigma_min < 0:
            raise ConfigError("noise_sigma, sigma_min must be >= 0 and separation > 0")
        if self.kind == FRAGMENTED and self.component_count < 8:
            raise ConfigError("fragmented regimes need >= 8 components")
        if self.kind == STRUCTURED and self.component_count > 8:
            raise ConfigError("structured regimes need <= 8 components")

    @classmethod
    def fragmented(cls, **kw) -> SynthRegime:
        base = dict(
            kind=FRAGMENTED, num_classes=2, component_count=24, noise_sigma=0.5, separation=8.0,
            boundary_mixing=0.8, global_jitter=0.6, boundary_jitter=0.0,
        )
        return cls(**{**base, **kw})

    @classmethod
    def structured(cls, **kw) -> SynthRegime:
        base = dict(
            kind=STRUCTURED, num_classes=4, component_count=3, noise_sigma=0.5, separation=8.0,
            boundary_mixing=0.8, global_jitter=0.0, boundary_jitter=0.6,
        )
        return cls(**{**base, **kw})

    @classmethod
    def named(cls, kind: str, **kw) -> SynthRegime:
        if kind == FRAGMENTED:
            return cls.fragmented(**kw)
        if kind == STRUCTURED:
            return cls.structured(**kw)
        raise ConfigError(f"unknown regime {kind!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d


@dataclass(frozen=True)
class SynthModelSpec:
    model_id: str
    quality: float

    def __post_init__(self):
        if not 0.0 <= self.quality <= 1.0:
            raise ConfigError(f"quality must lie in [0, 1], got {self.quality}")

    @property
    def ground_truth(self) -> float:
        return dice_from_quality(self.quality)


def dice_from_quality(q: float) -> float:
    return 0.30 + 0.60 * q


def default_models(count: int = 7) -> list[SynthModelSpec]:
    if count < 2:
        raise ConfigError("a zoo needs at least 2 models")
    qualities = np.linspace(0.05, 0.95, count)
    return [SynthModelSpec(f"model_{k}", float(q)) for k, q in enumerate(qualities)]


def _stream_id(text: str) -> int:
    return zlib.crc32(text.encode())


# -- label volumes ----------------------------------------------------------


def _ball(shape, center, radii) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, n) for n in shape)]
    r2 = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii))
    return r2 <= 1.0


def _place(rng, shape, occupied, radii_fn, gap, tries=2000):
    """Rejection-sample a blob that keeps ``gap`` voxels from everything else."""
    for _ in range(tries):
        radii = radii_fn()
        margin = np.ceil(radii).astype(int) + 1
        center = [rng.integers(m, n - m) for m, n in zip(margin, shape)]
        blob = _ball(shape, center, radii)
        grown = _ball(shape, center, radii + gap)
        if not (grown & occupied).any():
            return blob
    return None


def generate_task(regime: SynthRegime, seed: int) -> tuple[np.ndarray, TaskDescriptor]:
    """Label volume and task descriptor for ``regime``; deterministic in ``seed``."""
    shape = tuple(regime.shape)
    if len(shape) != 3 or min(shape) < 8:
        raise ConfigError(f"synthetic volumes need every axis >= 8, got {shape}")
    rng = make_rng(seed, _stream_id("task"), _stream_id(regime.kind))
    labels = np.zeros(shape, dtype=np.int32)
    occupied = np.zeros(shape, dtype=bool)
    fg = regime.num_classes - 1
    if regime.kind == FRAGMENTED:
        count = regime.component_count
        radii_fn = lambda: np.full(3, rng.uniform(1.0, 2.2))  # noqa: E731
        gap = 1.5
    else:
        count = regime.component_count
        scale = min(shape) / 32.0
        radii_fn = lambda: rng.uniform(5.0, 8.0, size=3) * scale  # noqa: E731
        gap = 1.0
    placed = 0
    for k in range(max(count, fg)):
        blob = _place(rng, shape, occupied, radii_fn, gap)
        if blob is None:
            break
        labels[blob] = 1 + k % fg
        occupied |= blob
        placed += 1
    if placed < fg:
        raise ConfigError(f"volume {shape} too small to place {fg} foreground classes")
    name = f"synthetic-{regime.kind}-seed{seed}"
    return labels, TaskDescriptor(name, regime.num_classes, ())


# -- features ---------------------------------------------------------------


def simplex_centroids(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """``num_classes`` points in R^dim at pairwise distance ``separation``."""
    c = np.zeros((num_classes, dim))
    c[np.arange(num_classes), np.arange(num_classes)] = separation / math.sqrt(2.0)
    return c


def _other_class(labels: np.ndarray) -> np.ndarray:
    """For each voxel, the label of its first differing face neighbour (or its own)."""
    other = labels.copy()
    found = np.zeros(labels.shape, dtype=bool)
    for off in neighbour_offsets(6):
        src, dst = shifted_views(labels.shape, off)
        hit = (labels[src] != labels[dst]) & ~found[src]
        other[src] = np.where(hit, labels[dst], other[src])
        found[src] |= hit
    return other


def _pool(features: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return features
    c, x, y, z = features.shape
    return features.reshape(c, x // factor, factor, y // factor, factor, z // factor, factor).mean(axis=(2, 4, 6))


def model_nuisance(regime: SynthRegime, spec: SynthModelSpec, seed: int) -> tuple[float, float]:
    """Per-model multiplicative factors on bulk noise and boundary confusion."""
    rng = make_rng(seed, _stream_id("nuisance"), _stream_id(spec.model_id))
    zg, zb = rng.standard_normal(2)
    return math.exp(regime.global_jitter * zg), math.exp(regime.boundary_jitter * zb)


def generate_model_features(
    labels: np.ndarray,
    regime: SynthRegime,
    spec: SynthModelSpec,
    stage: StageRole,
    seed: int,
    case: int = 0,
) -> StageFeatureDump:
    factor = 2 ** stage.index
    if any(n % factor for n in labels.shape):
        raise ConfigError(f"stage {stage} downsampling {factor} does not divide {labels.shape}")
    g_jit, b_jit = model_nuisance(regime, spec, seed)
    rng = make_rng(seed, _stream_id("features"), _stream_id(spec.model_id),
                   _stream_id(stage.kind.value), stage.index, case)
    centroids = simplex_centroids(regime.num_classes, regime.feature_dim, regime.separation)
    sigma = (regime.noise_sigma * (1.0 - spec.quality) + regime.sigma_min) * g_jit
    rate = min(1.0, regime.boundary_mixing * (1.0 - spec.quality) * b_jit)
    noise = rng.standard_normal(labels.shape + (regime.feature_dim,))
    confused = boundary_mask(labels, 6) & (rng.uniform(size=labels.shape) < rate)
    shown = np.where(confused, _other_class(labels), labels)
    feats = centroids[shown] + sigma * noise
    tensor = _pool(np.moveaxis(feats, -1, 0), factor).astype(np.float32)
    return StageFeatureDump(tensor, labels, stage)


# -- in-memory and on-disk zoos ---------------------------------------------


@dataclass
class SyntheticZoo:
    """A generated zoo held in memory; satisfies :class:`engine.ZooSource`."""

    regime: SynthRegime
    models: list[SynthModelSpec]
    seed: int
    num_cases: int = 1
    stage_roles: tuple[StageRole, ...] = DEFAULT_STAGES

    def __post_init__(self):
        self.num_classes = self.regime.num_classes
        self._labels = [generate_task(self.regime, self._case_seed(c))[0] for c in range(self.num_cases)]
        self._by_id = {m.model_id: m for m in self.models}
        if len(self._by_id) != len(self.models):
            raise ConfigError("synthetic model ids must be unique")
        if len({m.quality for m in self.models}) != len(self.models):
            raise ConfigError("synthetic models must have distinct qualities")

    def _case_seed(self, case: int) -> int:
        return int(make_rng(self.seed, _stream_id("case"), case).integers(0, 2**63))

    def model_ids(self) -> list[str]:
        return [m.model_id for m in self.models]

    def stages(self, model_id: str, kind: StageKind) -> list[StageRole]:
        return sorted((s for s in self.stage_roles if s.kind is kind), key=lambda s: s.index)

    def labels(self, case: int) -> np.ndarray:
        return self._labels[case]

    def dump(self, model_id: str, stage: StageRole, case: int) -> StageFeatureDump:
        return generate_model_features(self._labels[case], self.regime, self._by_id[model_id], stage, self.seed, case)

    def truth(self, model_id: str) -> float:
        return self._by_id[model_id].ground_truth

    def write(self, out_dir: Path | str) -> Path:
        """Write blobs plus ``zoo.json``; returns the manifest path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cases = []
        for c in range(self.num_cases):
            write_blob(out / "labels" / f"case{c}.bin", self._labels[c])
            cases.append(f"labels/case{c}.bin")
        models = []
        for m in self.models:
            stages = []
            for s in self.stage_roles:
                paths = []
                for c in range(self.num_cases):
                    rel = f"{m.model_id}/{s.kind.value}{s.index}_case{c}.bin"
                    write_blob(out / rel, self.dump(m.model_id, s, c).tensor)
                    paths.append(rel)
                stages.append({"role": s.kind.value, "index": s.index, "path": paths})
            models.append({"id": m.model_id, "dice": m.ground_truth, "quality": m.quality, "stages": stages})
        manifest = {
            "task": {
                "name": f"synthetic-{self.regime.kind}",
                "num_classes": self.regime.num_classes,
                "cases": cases,
            },
            "models": models,
            "generator": {"regime": self.regime.to_dict(), "seed": self.seed, "rng": RNG_ALGORITHM},
        }
        path = out / "zoo.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def synthetic_zoo(kind: str, seed: int, models: int = 7, cases: int = 1, **regime_kw) -> SyntheticZoo:
    return SyntheticZoo(SynthRegime.named(kind, **regime_kw), default_models(models), seed, cases)
