import os

import numpy as np
import pytest

from src.lib.error.handler import CheckpointError
from src.lib.nn.checkpoint import checkpoint_exists, config_hash, file_sha256, load_checkpoint, save_checkpoint
from src.lib.nn.layers import Sequential, mlp


def test_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    model = Sequential(mlp(4, [5], 3, rng))
    model.forward(rng.standard_normal((6, 4)))
    stem = str(tmp_path / "model")
    save_checkpoint(stem, model.state_dict(), config_hash="abc", metadata={"epoch": 3})
    assert checkpoint_exists(stem)

    tensors, manifest = load_checkpoint(stem, expected_hash="abc")
    assert manifest.metadata == {"epoch": 3}
    assert list(tensors) == list(model.state_dict())
    for name, value in model.state_dict().items():
        assert tensors[name].tobytes() == value.tobytes()


def test_float32_checkpoint(tmp_path):
    stem = str(tmp_path / "small")
    save_checkpoint(stem, {"w": np.array([[1.5, -2.25]])}, dtype="float32")
    tensors, _ = load_checkpoint(stem)
    np.testing.assert_array_equal(tensors["w"], [[1.5, -2.25]])
    with pytest.raises(CheckpointError):
        save_checkpoint(stem, {"w": np.zeros(1)}, dtype="float16")


def test_hash_mismatch_is_rejected(tmp_path):
    stem = str(tmp_path / "model")
    save_checkpoint(stem, {"w": np.zeros(2)}, config_hash="one")
    with pytest.raises(CheckpointError):
        load_checkpoint(stem, expected_hash="two")


def test_corrupt_blob_is_rejected(tmp_path):
    stem = str(tmp_path / "model")
    save_checkpoint(stem, {"w": np.arange(4.0)})
    with open(f"{stem}.bin", "r+b") as f:
        f.write(b"\x01")
    with pytest.raises(CheckpointError):
        load_checkpoint(stem)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "absent"))


def test_config_hash_is_canonical():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 64


def test_file_sha256(tmp_path):
    path = tmp_path / "blob"
    path.write_bytes(b"abc")
    assert file_sha256(str(path)) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert os.path.getsize(path) == 3
