"""Class-balanced voxel sampling from a stage dump.

Two strata are used: one per foreground class (label > 0) and one for
background (label 0). The foreground share of the budget is split evenly
across the foreground classes present; whatever a stratum cannot fill flows to
the other side so that the total drawn is ``min(budget, voxels)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SamplingError
from .io import StageFeatureDump
from .types import SampleSet

RNG_ALGORITHM = "numpy.PCG64/SeedSequence"

DEFAULT_BUDGET = 1000
DEFAULT_FG_FRACTION = 0.5


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``; see ``RNG_ALGORITHM``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SamplingConfig:
    budget: int = DEFAULT_BUDGET
    foreground_fraction: float = DEFAULT_FG_FRACTION
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.foreground_fraction < 1.0:
            raise SamplingError(f"foreground_fraction must lie in (0, 1), got {self.foreground_fraction}")
        if not 0 <= self.seed < 2**64:
            raise SamplingError("seed must be a 64-bit unsigned integer")


def map_to_stage_grid(coords: np.ndarray, label_shape, grid_shape) -> np.ndarray:
    """Nearest stage-grid cell for each label-grid voxel.

    Voxel centres are scaled proportionally, ``p = (x + 0.5) * g / n - 0.5``,
    and rounded to the nearest integer with exact halves going down. Integer
    arithmetic keeps this exact: ``ceil(((2x + 1) g - 2n) / 2n)``.
    """
    coords = np.asarray(coords, dtype=np.int64)
    n = np.asarray(label_shape, dtype=np.int64)
    g = np.asarray(grid_shape, dtype=np.int64)
    num = (2 * coords + 1) * g - 2 * n
    out = -((-num) // (2 * n))
    return np.clip(out, 0, g - 1)


def allocate_quotas(counts: dict[int, int], budget: int, foreground_fraction: float) -> dict[int, int]:
    """Per-class sample counts for the given class voxel counts.

    Remainders go to the rarest classes first (ties by class id). Classes
    short of their quota hand the shortfall to background; a short background
    hands it back to foreground classes that still have spare voxels.
    """
    if budget < 2:
        raise SamplingError(f"budget must be >= 2, got {budget}")
    counts = {int(c): int(n) for c, n in counts.items() if n > 0}
    if not counts:
        raise SamplingError("empty volume")
    fg = sorted((c for c in counts if c != 0), key=lambda c: (counts[c], c))
    quota = {c: 0 for c in counts}

    def fill(classes: list[int], amount: int) -> int:
        # water-filling: equal shares, remainder to the front of ``classes``
        while amount > 0:
            open_ = [c for c in classes if quota[c] < counts[c]]
            if not open_:
                break
            share, rem = divmod(amount, len(open_))
            given = 0
            for k, c in enumerate(open_):
                want = share + (1 if k < rem else 0)
                take = min(want, counts[c] - quota[c])
                quota[c] += take
                given += take
            amount -= given
        return amount

    fg_target = int(np.floor(budget * foreground_fraction + 0.5)) if fg else 0
    left = fill(fg, fg_target)
    bg_target = budget - fg_target + left
    if 0 in counts:
        bg_target = fill([0], bg_target)
    fill(fg, bg_target)
    return {c: q for c, q in sorted(quota.items())}


def stratified_indices(labels: np.ndarray, cfg: SamplingConfig, *stream: int) -> np.ndarray:
    """Sorted flat (C-order) indices of the voxels to sample."""
    flat = np.asarray(labels).reshape(-1)
    if flat.size == 0:
        raise SamplingError("empty volume")
    classes, counts = np.unique(flat, return_counts=True)
    quota = allocate_quotas(dict(zip(classes.tolist(), counts.tolist())), cfg.budget, cfg.foreground_fraction)
    rng = make_rng(cfg.seed, *stream)
    picked = []
    for c, k in quota.items():
        if k == 0:
            continue
        population = np.flatnonzero(flat == c)
        if k >= population.size:
            picked.append(population)
        else:
            picked.append(rng.choice(population, size=k, replace=False))
    return np.sort(np.concatenate(picked))


def gather(dump: StageFeatureDump, flat_index: np.ndarray, num_classes: int) -> SampleSet:
    """Build a SampleSet from label-grid voxel indices of ``dump``."""
    coords = np.stack(np.unravel_index(flat_index, dump.labels.shape), axis=1)
    cell = map_to_stage_grid(coords, dump.labels.shape, dump.grid_shape)
    feats = dump.tensor[:, cell[:, 0], cell[:, 1], cell[:, 2]].T.astype(np.float64)
    labels = dump.labels.reshape(-1)[flat_index]
    return SampleSet(feats, labels, coords, num_classes, dump.stage)


def stratified_sample(
    dump: StageFeatureDump, cfg: SamplingConfig, num_classes: int | None = None, stream: tuple[int, ...] = ()
) -> SampleSet:
    """Stratified, seeded sample of at most ``cfg.budget`` voxels of ``dump``.

    The draw depends only on the label volume, the config and ``stream``, so
    every stage and every model of a case sees the same voxels.
    """
    if num_classes is None:
        num_classes = int(dump.labels.max()) + 1
    idx = stratified_indices(dump.labels, cfg, *stream)
    return gather(dump, idx, num_classes)
