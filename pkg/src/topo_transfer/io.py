"""On-disk contract: raw tensor blobs and the zoo manifest.

A blob is ``<name>.bin`` holding little-endian raw values plus a ``<name>.json``
sidecar::

    {"shape": [c, x, y, z], "dtype": "f32", "order": "cxyz"}   # stage features
    {"shape": [x, y, z],    "dtype": "i32", "order": "xyz"}    # label volume

The manifest (``zoo.json``) names the task, its label volumes (one per case)
and, per model, one blob per (stage, case)::

    {"task": {"name": "...", "num_classes": 2, "cases": ["labels/c0.bin", ...]},
     "models": [{"id": "m0", "dice": 0.81,
                 "stages": [{"role": "decoder", "index": 0,
                             "path": ["m0/d0_c0.bin", ...]}]}]}

``path`` may be a plain string when the task has a single case. Paths are
resolved relative to the manifest's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateModelError,
    LabelRangeError,
    MalformedManifestError,
    MissingFileError,
    ShapeMismatchError,
)
from .types import StageKind, StageRole

DTYPES = {"f32": np.dtype("<f4"), "i32": np.dtype("<i4")}
ORDERS = {"cxyz": 4, "xyz": 3}


@dataclass(frozen=True)
class BlobHeader:
    shape: tuple[int, ...]
    dtype: str
    order: str


@dataclass(frozen=True)
class TaskDescriptor:
    name: str
    num_classes: int
    label_volume_paths: tuple[Path, ...]

    @property
    def num_cases(self) -> int:
        return len(self.label_volume_paths)


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    stage_dumps: tuple[tuple[StageRole, tuple[Path, ...]], ...]
    ground_truth_performance: float | None = None

    @property
    def stages(self) -> list[StageRole]:
        return [stage for stage, _ in self.stage_dumps]

    def stages_of(self, kind: StageKind) -> list[StageRole]:
        return sorted((s for s in self.stages if s.kind is kind), key=lambda s: s.index)

    def path_for(self, stage: StageRole, case: int = 0) -> Path:
        for s, paths in self.stage_dumps:
            if s == stage:
                return paths[case]
        raise KeyError(f"model {self.model_id!r} has no stage {stage}")


@dataclass(frozen=True)
class ZooManifest:
    models: tuple[ModelEntry, ...]
    task: TaskDescriptor
    path: Path | None = None

    def model(self, model_id: str) -> ModelEntry:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise KeyError(model_id)

    def truths(self) -> dict[str, float]:
        return {
            m.model_id: m.ground_truth_performance
            for m in self.models
            if m.ground_truth_performance is not None
        }


@dataclass(frozen=True, eq=False)
class StageFeatureDump:
    """Channels-first stage tensor plus the label volume of the same case.

    The tensor grid may be coarser than the label grid by an integer factor
    per axis (encoder/decoder pyramids); see
    :func:`topo_transfer.sampling.map_to_stage_grid`.
    """

    tensor: np.ndarray  # (C, X, Y, Z) float32
    labels: np.ndarray  # (X, Y, Z) int32
    stage: StageRole

    @property
    def feature_dim(self) -> int:
        return int(self.tensor.shape[0])

    @property
    def grid_shape(self) -> tuple[int, int, int]:
        return tuple(self.tensor.shape[1:])

    def standardized(self) -> StageFeatureDump:
        """Per-channel z-scoring over the whole stage grid."""
        t = self.tensor.astype(np.float64)
        mu = t.mean(axis=(1, 2, 3), keepdims=True)
        sd = t.std(axis=(1, 2, 3), keepdims=True)
        sd[sd == 0] = 1.0
        return StageFeatureDump((t - mu) / sd, self.labels, self.stage)


# -- blobs ------------------------------------------------------------------


def _bin_and_sidecar(path: Path | str) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix == ".bin":
        return path, path.with_suffix(".json")
    return path.with_name(path.name + ".bin"), path.with_name(path.name + ".json")


def read_header(path: Path | str) -> BlobHeader:
    bin_path, side = _bin_and_sidecar(path)
    for p in (bin_path, side):
        if not p.is_file():
            raise MissingFileError(p)
    try:
        meta = json.loads(side.read_text())
        shape = tuple(int(v) for v in meta["shape"])
        dtype, order = meta["dtype"], meta["order"]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedManifestError(f"bad sidecar {side}: {exc}") from exc
    if dtype not in DTYPES or order not in ORDERS or len(shape) != ORDERS[order]:
        raise MalformedManifestError(f"bad sidecar {side}: shape={shape} dtype={dtype} order={order}")
    if any(v < 1 for v in shape):
        raise MalformedManifestError(f"bad sidecar {side}: empty axis in shape {shape}")
    expected = math.prod(shape) * DTYPES[dtype].itemsize
    actual = bin_path.stat().st_size
    if actual != expected:
        raise MalformedManifestError(f"{bin_path} holds {actual} bytes, header implies {expected}")
    return BlobHeader(shape, dtype, order)


def read_blob(path: Path | str) -> np.ndarray:
    header = read_header(path)
    bin_path, _ = _bin_and_sidecar(path)
    data = np.fromfile(bin_path, dtype=DTYPES[header.dtype])
    # always hand back native byte order
    return data.astype(DTYPES[header.dtype].newbyteorder("="), copy=False).reshape(header.shape)


def write_blob(path: Path | str, array: np.ndarray) -> Path:
    """Write ``array`` as a blob; float arrays become f32/cxyz, ints i32/xyz."""
    array = np.asarray(array)
    if array.dtype.kind == "f":
        dtype, order = "f32", "cxyz"
    elif array.dtype.kind in "iu":
        dtype, order = "i32", "xyz"
    else:
        raise TypeError(f"unsupported dtype {array.dtype}")
    if array.ndim != ORDERS[order]:
        raise ValueError(f"{order} blob needs {ORDERS[order]} axes, got shape {array.shape}")
    bin_path, side = _bin_and_sidecar(path)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(array, dtype=DTYPES[dtype]).tofile(bin_path)
    side.write_text(json.dumps({"shape": list(array.shape), "dtype": dtype, "order": order}))
    return bin_path


# -- shapes -----------------------------------------------------------------


def check_grid_compatible(grid: tuple[int, ...], label_shape: tuple[int, ...], where: str = "") -> None:
    """A stage grid must equal the label grid or divide it axis-wise."""
    if len(grid) != 3 or len(label_shape) != 3:
        raise ShapeMismatchError(f"{where}expected 3 spatial axes, got {grid} vs {label_shape}")
    for g, n in zip(grid, label_shape):
        if g > n or n % g:
            raise ShapeMismatchError(
                f"{where}tensor grid {tuple(grid)} is not an integer downsampling of labels {tuple(label_shape)}"
            )


def check_labels(labels: np.ndarray, num_classes: int, where: str = "") -> None:
    if labels.size == 0:
        raise ShapeMismatchError(f"{where}empty label volume")
    lo, hi = int(labels.min()), int(labels.max())
    if lo < 0 or hi >= num_classes:
        bad = hi if hi >= num_classes else lo
        raise LabelRangeError(f"{where}label value {bad} outside 0..{num_classes - 1}")


# -- manifest ---------------------------------------------------------------


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise MalformedManifestError(message)


def load_manifest(path: Path | str) -> ZooManifest:
    """Parse and eagerly validate a ``zoo.json`` manifest."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path)
    try:
        doc = json.loads(path.read_text())
    except ValueError as exc:
        raise MalformedManifestError(f"{path}: {exc}") from exc
    root = path.parent
    _require(isinstance(doc, dict), "manifest must be a JSON object")
    _require(isinstance(doc.get("task"), dict), "manifest needs a 'task' object")
    _require(isinstance(doc.get("models"), list), "manifest needs a 'models' list")

    t = doc["task"]
    try:
        num_classes = int(t["num_classes"])
        cases = [root / c for c in t["cases"]]
        name = str(t.get("name", path.stem))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedManifestError(f"bad task block: {exc}") from exc
    _require(num_classes >= 1, "num_classes must be >= 1")
    _require(len(cases) >= 1, "task needs at least one case")
    task = TaskDescriptor(name, num_classes, tuple(cases))

    label_shapes = []
    max_label = -1
    for i, case in enumerate(cases):
        labels = read_blob(case)
        where = f"case {i} ({case}): "
        if labels.ndim != 3:
            raise ShapeMismatchError(f"{where}label volume must be 3-D, got {labels.shape}")
        check_labels(labels, num_classes, where)
        label_shapes.append(labels.shape)
        max_label = max(max_label, int(labels.max()))
    _require(
        max_label + 1 == num_classes,
        f"num_classes={num_classes} but the largest label in the volumes is {max_label}",
    )

    models = []
    seen = set()
    for raw in doc["models"]:
        try:
            model_id = str(raw["id"])
            stages_raw = raw["stages"]
        except (KeyError, TypeError) as exc:
            raise MalformedManifestError(f"bad model entry {raw!r}: {exc}") from exc
        if model_id in seen:
            raise DuplicateModelError(f"duplicate model id {model_id!r}")
        seen.add(model_id)
        dice = raw.get("dice")
        if dice is not None:
            dice = float(dice)
            _require(0.0 <= dice <= 1.0, f"model {model_id}: dice {dice} outside [0, 1]")
        stage_dumps = []
        for s in stages_raw:
            try:
                stage = StageRole(StageKind(s["role"]), int(s["index"]))
                paths = s["path"]
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedManifestError(f"model {model_id}: bad stage entry {s!r}: {exc}") from exc
            if isinstance(paths, str):
                paths = [paths]
            _require(
                len(paths) == len(cases),
                f"model {model_id} stage {stage}: {len(paths)} paths for {len(cases)} cases",
            )
            _require(stage not in dict(stage_dumps), f"model {model_id}: stage {stage} listed twice")
            paths = tuple(root / p for p in paths)
            for case, p in enumerate(paths):
                header = read_header(p)
                where = f"model {model_id} stage {stage} case {case}: "
                if header.order != "cxyz" or header.dtype != "f32":
                    raise MalformedManifestError(f"{where}stage tensors must be f32/cxyz")
                check_grid_compatible(header.shape[1:], label_shapes[case], where)
            stage_dumps.append((stage, paths))
        kinds = {stage.kind for stage, _ in stage_dumps}
        _require(
            kinds == {StageKind.DECODER, StageKind.ENCODER},
            f"model {model_id} needs at least one decoder and one encoder stage",
        )
        stage_dumps.sort(key=lambda e: e[0].sort_key)
        models.append(ModelEntry(model_id, tuple(stage_dumps), dice))
    return ZooManifest(tuple(models), task, path)


def load_labels(task: TaskDescriptor, case: int = 0) -> np.ndarray:
    labels = read_blob(task.label_volume_paths[case])
    check_labels(labels, task.num_classes, f"case {case}: ")
    return labels


def load_stage_dump(
    entry: ModelEntry,
    stage: StageRole,
    task: TaskDescriptor,
    case: int = 0,
    labels: np.ndarray | None = None,
) -> StageFeatureDump:
    """Load one stage tensor with its case's labels and re-check both."""
    if stage not in entry.stages:
        raise KeyError(f"model {entry.model_id!r} has no stage {stage}")
    if labels is None:
        labels = load_labels(task, case)
    else:
        check_labels(labels, task.num_classes, f"case {case}: ")
    tensor = read_blob(entry.path_for(stage, case))
    if tensor.ndim != 4:
        raise ShapeMismatchError(f"stage tensor must be 4-D (c,x,y,z), got {tensor.shape}")
    check_grid_compatible(tensor.shape[1:], labels.shape, f"model {entry.model_id} stage {stage}: ")
    return StageFeatureDump(tensor, labels, stage)


def dump_from_arrays(tensor: np.ndarray, labels: np.ndarray, stage: StageRole, num_classes: int) -> StageFeatureDump:
    """In-memory counterpart of :func:`load_stage_dump` with the same checks."""
    tensor = np.asarray(tensor, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int32)
    if tensor.ndim != 4 or labels.ndim != 3:
        raise ShapeMismatchError(f"need (c,x,y,z) tensor and (x,y,z) labels, got {tensor.shape}, {labels.shape}")
    check_grid_compatible(tensor.shape[1:], labels.shape)
    check_labels(labels, num_classes)
    return StageFeatureDump(tensor, labels, stage)
