"""Checkpoint container tests: bit-exact round-trip, version/checksum checks."""

import numpy as np
import pytest

from implut.checkpoint import (CheckpointChecksumError, CheckpointFormatError,
                               CheckpointVersionError, deserialize_checkpoint,
                               load_checkpoint, save_checkpoint,
                               serialize_checkpoint)
from implut.predictor import ParamPredictor
from implut.transform import MlpFilter


def models():
    return MlpFilter(hidden=8, seed=11), ParamPredictor(hidden=8, seed=11)


def test_round_trip_bit_exact(tmp_path):
    model, predictor = models()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, predictor, config_fingerprint="abc123")
    loaded = load_checkpoint(path)
    for name, t in model.params.items():
        assert np.array_equal(loaded.model.params[name].data, t.data)
    for name, t in predictor.params.items():
        assert np.array_equal(loaded.predictor.params[name].data, t.data)
    assert loaded.model.filter_names == model.filter_names
    assert loaded.config_fingerprint == "abc123"


def test_serialized_bytes_stable():
    model, _ = models()
    assert serialize_checkpoint(model) == serialize_checkpoint(model)


def test_round_trip_without_predictor(tmp_path):
    model, _ = models()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    assert load_checkpoint(path).predictor is None


def test_corrupt_payload_detected():
    model, _ = models()
    data = bytearray(serialize_checkpoint(model))
    data[-5] ^= 0xFF
    with pytest.raises(CheckpointChecksumError):
        deserialize_checkpoint(bytes(data))


def test_unknown_version_rejected():
    model, _ = models()
    data = serialize_checkpoint(model)
    data = data.replace(b"implut-checkpoint 1", b"implut-checkpoint 99", 1)
    with pytest.raises(CheckpointVersionError) as exc:
        deserialize_checkpoint(data)
    assert exc.value.found == 99


def test_not_a_checkpoint_rejected():
    with pytest.raises(CheckpointFormatError):
        deserialize_checkpoint(b"garbage blob that is not a checkpoint")


def test_fingerprint_mismatch_is_warning_not_error():
    model, _ = models()
    data = serialize_checkpoint(model, config_fingerprint="expected")
    with pytest.warns(UserWarning):
        loaded = deserialize_checkpoint(data, expected_fingerprint="other")
    assert loaded.config_fingerprint == "expected"
