import hashlib

import numpy as np
import pytest

from cadsi.core.checkpoint import (TIMESTAMP_KEY, load_model, load_params, load_pretrain, read_manifest, save_params,
                                   write_manifest)
from cadsi.utils.errors import CheckpointError


def test_manifest_fields(tmp_path):
    data = tmp_path / "data.tsv"
    data.write_text("u0\tm0\n")
    snapshot = "dim=8\nseed=7\n"
    write_manifest(str(tmp_path / "ckpt"), "train", snapshot, [str(data)], {"score_mode": "semantic"})
    fields = read_manifest(str(tmp_path / "ckpt"))
    assert fields["command"] == "train"
    assert fields["seed"] == "7"
    assert fields["config_hash"] == hashlib.sha256(snapshot.encode("utf-8")).hexdigest()
    assert len(fields["input_hash"]) == 64
    assert fields["inputs"] == str(data)
    assert fields["score_mode"] == "semantic"
    assert TIMESTAMP_KEY in fields


def test_input_hash_tracks_content(tmp_path):
    data = tmp_path / "data.tsv"
    data.write_text("a\n")
    write_manifest(str(tmp_path / "one"), "pretrain", "seed=0\n", [str(data)])
    data.write_text("b\n")
    write_manifest(str(tmp_path / "two"), "pretrain", "seed=0\n", [str(data)])
    assert read_manifest(str(tmp_path / "one"))["input_hash"] != read_manifest(str(tmp_path / "two"))["input_hash"]


def test_missing_manifest(tmp_path):
    with pytest.raises(CheckpointError) as info:
        read_manifest(str(tmp_path))
    assert info.value.code == "checkpoint_missing"


def test_missing_checkpoint_directories(tmp_path):
    with pytest.raises(CheckpointError):
        load_model(str(tmp_path / "absent"))
    with pytest.raises(CheckpointError):
        load_pretrain(str(tmp_path / "absent"))


def test_incomplete_model_checkpoint(tmp_path):
    write_manifest(str(tmp_path), "train", "seed=0\n", [])
    with pytest.raises(CheckpointError) as info:
        load_model(str(tmp_path))
    assert "params.npz" in info.value.message


def test_params_roundtrip(tmp_path):
    params = {"user_id": np.arange(6.0).reshape(3, 2), "layer_b": np.zeros((2, 4))}
    save_params(str(tmp_path / "params.npz"), params)
    loaded = load_params(str(tmp_path / "params.npz"))
    assert sorted(loaded) == ["layer_b", "user_id"]
    np.testing.assert_array_equal(loaded["user_id"], params["user_id"])
    with pytest.raises(CheckpointError):
        load_params(str(tmp_path / "other.npz"))
