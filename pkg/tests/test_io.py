import json

import numpy as np
import pytest

from topo_transfer.errors import (
    DuplicateModelError,
    LabelRangeError,
    MalformedManifestError,
    MissingFileError,
    ShapeMismatchError,
)
from topo_transfer.io import (
    dump_from_arrays,
    load_labels,
    load_manifest,
    load_stage_dump,
    read_blob,
    read_header,
    write_blob,
)
from topo_transfer.types import StageKind, StageRole


def write_zoo(root, model_ids=("a", "b"), labels=None, num_classes=2, grid=(4, 4, 4), dice=0.5):
    rng = np.random.default_rng(0)
    if labels is None:
        labels = np.zeros((4, 4, 4), dtype=np.int32)
        labels[2:, :, :] = 1
    write_blob(root / "labels.bin", labels)
    models = []
    for m in model_ids:
        stages = []
        for role in ("decoder", "encoder"):
            rel = f"{m}_{role}.bin"
            write_blob(root / rel, rng.standard_normal((8,) + grid).astype(np.float32))
            stages.append({"role": role, "index": 0, "path": rel})
        models.append({"id": m, "dice": dice, "stages": stages})
    doc = {"task": {"name": "t", "num_classes": num_classes, "cases": ["labels.bin"]}, "models": models}
    (root / "zoo.json").write_text(json.dumps(doc))
    return root / "zoo.json"


class TestBlobs:
    def test_round_trip(self, tmp_path):
        a = np.random.default_rng(1).standard_normal((3, 4, 5, 6)).astype(np.float32)
        write_blob(tmp_path / "x.bin", a)
        np.testing.assert_array_equal(read_blob(tmp_path / "x.bin"), a)
        assert read_header(tmp_path / "x").shape == (3, 4, 5, 6)

    def test_files_are_little_endian(self, tmp_path):
        write_blob(tmp_path / "l.bin", np.array([[[1, 256]]], dtype=np.int32))
        assert (tmp_path / "l.bin").read_bytes() == b"\x01\x00\x00\x00\x00\x01\x00\x00"

    def test_big_endian_input_reads_identically(self, tmp_path):
        a = np.arange(24, dtype=">f4").reshape(1, 2, 3, 4)
        write_blob(tmp_path / "b.bin", a)
        out = read_blob(tmp_path / "b.bin")
        np.testing.assert_array_equal(out, a.astype("<f4"))
        assert out.dtype.isnative

    def test_truncated_file(self, tmp_path):
        write_blob(tmp_path / "x.bin", np.zeros((1, 2, 2, 2), dtype=np.float32))
        (tmp_path / "x.bin").write_bytes(b"\x00" * 4)
        with pytest.raises(MalformedManifestError):
            read_blob(tmp_path / "x.bin")

    def test_missing_sidecar(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"")
        with pytest.raises(MissingFileError):
            read_blob(tmp_path / "x.bin")


class TestManifest:
    def test_two_models(self, tmp_path):
        zoo = load_manifest(write_zoo(tmp_path))
        assert [m.model_id for m in zoo.models] == ["a", "b"]
        assert zoo.models[0].stages == [StageRole.decoder(0), StageRole.encoder(0)]
        assert zoo.truths() == {"a": 0.5, "b": 0.5}

    def test_missing_tensor_names_path(self, tmp_path):
        path = write_zoo(tmp_path)
        (tmp_path / "b_encoder.bin").unlink()
        with pytest.raises(MissingFileError, match="b_encoder.bin"):
            load_manifest(path)

    def test_duplicate_id(self, tmp_path):
        with pytest.raises(DuplicateModelError):
            load_manifest(write_zoo(tmp_path, model_ids=("a", "a")))

    def test_label_out_of_range(self, tmp_path):
        labels = np.zeros((4, 4, 4), dtype=np.int32)
        labels[0, 0, 0] = 7
        with pytest.raises(LabelRangeError):
            load_manifest(write_zoo(tmp_path, labels=labels, num_classes=3))

    def test_num_classes_must_match_labels(self, tmp_path):
        with pytest.raises(MalformedManifestError):
            load_manifest(write_zoo(tmp_path, num_classes=3))

    def test_downsampled_stage_accepted(self, tmp_path):
        zoo = load_manifest(write_zoo(tmp_path, grid=(2, 2, 2)))
        dump = load_stage_dump(zoo.models[0], StageRole.encoder(0), zoo.task)
        assert dump.grid_shape == (2, 2, 2)

    def test_incompatible_stage_grid(self, tmp_path):
        with pytest.raises(ShapeMismatchError):
            load_manifest(write_zoo(tmp_path, grid=(3, 4, 4)))

    def test_dice_out_of_range(self, tmp_path):
        with pytest.raises(MalformedManifestError):
            load_manifest(write_zoo(tmp_path, dice=1.5))

    def test_model_needs_both_kinds(self, tmp_path):
        path = write_zoo(tmp_path)
        doc = json.loads(path.read_text())
        doc["models"][0]["stages"] = doc["models"][0]["stages"][:1]
        path.write_text(json.dumps(doc))
        with pytest.raises(MalformedManifestError):
            load_manifest(path)

    def test_loading_is_deterministic(self, tmp_path):
        zoo = load_manifest(write_zoo(tmp_path))
        a = load_stage_dump(zoo.models[1], zoo.models[1].stages_of(StageKind.DECODER)[0], zoo.task)
        b = load_stage_dump(zoo.models[1], zoo.models[1].stages_of(StageKind.DECODER)[0], zoo.task)
        assert a.tensor.tobytes() == b.tensor.tobytes()
        np.testing.assert_array_equal(load_labels(zoo.task), a.labels)


class TestDumpFromArrays:
    def test_feature_dim(self):
        d = dump_from_arrays(np.zeros((8, 4, 4, 4)), np.zeros((4, 4, 4)), StageRole.decoder(0), 1)
        assert d.feature_dim == 8

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dump_from_arrays(np.zeros((8, 4, 4, 4)), np.zeros((4, 4, 5)), StageRole.decoder(0), 1)

    def test_label_range(self):
        labels = np.zeros((4, 4, 4))
        labels[1, 1, 1] = 7
        with pytest.raises(LabelRangeError):
            dump_from_arrays(np.zeros((8, 4, 4, 4)), labels, StageRole.decoder(0), 3)
