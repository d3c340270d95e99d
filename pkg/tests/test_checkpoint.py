"""Checkpoint container: round-trips and malformed-file taxonomy."""

import struct

import numpy as np
import pytest

from gdnn.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from gdnn.errors import (BadMagicError, BadVersionError, CheckpointError,
                         ConfigError, DimMismatchError, FormatError,
                         TruncatedError)
from gdnn.model import GroupNetArch, build_model, group_digest
from gdnn.training import init_group

F32 = np.float32


@pytest.fixture
def small_model(rng):
    arch = GroupNetArch(num_groups=3, channels_per_group=2, num_classes=5)
    model = build_model(arch, seed=11)
    init_group(model, 1, attempt=1, seed=11)
    init_group(model, 2, attempt=1, seed=11)
    model.fc_b[...] = rng.standard_normal(5).astype(F32)
    model.channel_mean = np.array([0.49, 0.48, 0.44], F32)
    return model


def _model_bytes(model):
    parts = [model.fc_w.tobytes(), model.fc_b.tobytes()]
    for g in range(model.arch.num_groups):
        parts.append(group_digest(model, g).encode())
    return b"".join(parts)


def test_round_trip_is_bit_exact(small_model, tmp_path):
    path = tmp_path / "m.gdnn"
    save_checkpoint(small_model, path)
    loaded = load_checkpoint(path)
    assert loaded.arch == small_model.arch
    assert loaded.trained_groups == 2
    assert _model_bytes(loaded) == _model_bytes(small_model)
    np.testing.assert_array_equal(loaded.channel_mean, small_model.channel_mean)
    # a second save of the loaded model reproduces the file byte for byte
    path2 = tmp_path / "m2.gdnn"
    save_checkpoint(loaded, path2)
    assert path2.read_bytes() == path.read_bytes()


def test_round_trip_without_channel_mean(small_model, tmp_path):
    small_model.channel_mean = None
    path = tmp_path / "m.gdnn"
    save_checkpoint(small_model, path)
    assert load_checkpoint(path).channel_mean is None


def test_untrained_and_fully_trained_round_trip(tmp_path):
    arch = GroupNetArch(num_groups=2, channels_per_group=2)
    model = build_model(arch)
    path = tmp_path / "zero.gdnn"
    save_checkpoint(model, path)
    assert load_checkpoint(path).trained_groups == 0
    init_group(model, 1, 1, 0)
    init_group(model, 2, 1, 0)
    save_checkpoint(model, path)
    assert load_checkpoint(path).trained_groups == 2


def test_nonstandard_arch_is_rejected_on_save(tmp_path):
    from gdnn.layers import ConvSpec
    from gdnn.model import LayerDef
    arch = GroupNetArch(num_groups=1, channels_per_group=2, num_classes=2,
                        input_shape=(1, 6, 6),
                        layers=(LayerDef("c", "conv", ConvSpec(1, 2, 3)),))
    with pytest.raises(ConfigError):
        save_checkpoint(build_model(arch), tmp_path / "x.gdnn")


# ------------------------------------------------------- malformed inputs


def _saved(small_model, tmp_path):
    path = tmp_path / "good.gdnn"
    save_checkpoint(small_model, path)
    return path.read_bytes()


def test_bad_magic(small_model, tmp_path):
    data = _saved(small_model, tmp_path)
    bad = tmp_path / "bad.gdnn"
    bad.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(BadMagicError):
        load_checkpoint(bad)


def test_bad_version(small_model, tmp_path):
    data = _saved(small_model, tmp_path)
    bad = tmp_path / "bad.gdnn"
    bad.write_bytes(MAGIC + struct.pack("<I", VERSION + 9) + data[8:])
    with pytest.raises(BadVersionError):
        load_checkpoint(bad)


@pytest.mark.parametrize("cut", [2, 6, 21, 40, -7, -1])
def test_truncation_anywhere(small_model, tmp_path, cut):
    data = _saved(small_model, tmp_path)
    bad = tmp_path / "bad.gdnn"
    bad.write_bytes(data[:cut])
    with pytest.raises(TruncatedError):
        load_checkpoint(bad)


def test_dim_mismatch(small_model, tmp_path):
    # bump channels_per_group in the header: the stored conv tensors no
    # longer match the shapes the header implies
    data = bytearray(_saved(small_model, tmp_path))
    struct.pack_into("<I", data, 12, small_model.arch.channels_per_group + 1)
    bad = tmp_path / "bad.gdnn"
    bad.write_bytes(bytes(data))
    with pytest.raises(DimMismatchError):
        load_checkpoint(bad)


def test_wrong_record_name(small_model, tmp_path):
    data = _saved(small_model, tmp_path)
    # first record name is "conv1.g0.weight", 20 bytes into the file after
    # magic + 5 header words: locate and corrupt it
    idx = data.index(b"conv1.g0.weight")
    bad_data = data[:idx] + b"conv9.g0.weight" + data[idx + 15:]
    bad = tmp_path / "bad.gdnn"
    bad.write_bytes(bad_data)
    with pytest.raises(FormatError):
        load_checkpoint(bad)


def test_trailing_junk(small_model, tmp_path):
    data = _saved(small_model, tmp_path)
    bad = tmp_path / "bad.gdnn"
    bad.write_bytes(data + struct.pack("<I", 3) + b"xyz" + struct.pack("<II", 1, 1) + b"\0" * 4)
    with pytest.raises(FormatError):
        load_checkpoint(bad)


def test_nonfinite_payload(small_model, tmp_path):
    path = tmp_path / "good.gdnn"
    small_model.conv_w[0][0][0, 0, 0, 0] = np.nan
    save_checkpoint(small_model, path)
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_header_with_invalid_model(small_model, tmp_path):
    data = _saved(small_model, tmp_path)
    bad = tmp_path / "bad.gdnn"
    # zero groups is not a constructible model
    patched = bytearray(data)
    struct.pack_into("<I", patched, 8, 0)
    bad.write_bytes(bytes(patched))
    with pytest.raises(FormatError):
        load_checkpoint(bad)
    # trained_groups beyond the group count
    patched = bytearray(data)
    struct.pack_into("<I", patched, 20, 99)
    bad.write_bytes(bytes(patched))
    with pytest.raises(FormatError):
        load_checkpoint(bad)


def test_error_taxonomy_is_distinct():
    for cls in (BadMagicError, BadVersionError, TruncatedError, DimMismatchError):
        assert issubclass(cls, CheckpointError)
    assert not issubclass(BadMagicError, BadVersionError)
    assert not issubclass(TruncatedError, DimMismatchError)
