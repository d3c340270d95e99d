"""Model checkpoint container.

Layout: magic "GDNN", then u32 version, num_groups, channels_per_group,
num_classes, trained_groups, followed by one named tensor record per
(conv layer, group) pair in layer order ("conv1.g0.weight",
"conv1.g0.bias", "conv1.g1.weight", ...), then "fc.weight" and "fc.bias",
then an optional "channel_mean" record. Nothing may follow.

The header fully determines the expected record list, so the container
only encodes models built on the standard layer stack.
"""

from pathlib import Path

import numpy as np

from .errors import (BadMagicError, BadVersionError, ConfigError,
                     DimMismatchError, FormatError)
from .model import GroupModel, GroupNetArch, build_model
from .records import read_exact, read_u32, read_record, write_record, write_u32

MAGIC = b"GDNN"
VERSION = 1


def save_checkpoint(model: GroupModel, path):
    if not model.arch.is_standard:
        raise ConfigError("checkpoints only encode the standard layer stack")
    arch = model.arch
    with open(path, "wb") as f:
        f.write(MAGIC)
        for v in (VERSION, arch.num_groups, arch.channels_per_group,
                  arch.num_classes, model.trained_groups):
            write_u32(f, v)
        for ci, ld in enumerate(arch.conv_layers()):
            for g in range(arch.num_groups):
                write_record(f, f"{ld.name}.g{g}.weight", model.conv_w[g][ci])
                write_record(f, f"{ld.name}.g{g}.bias", model.conv_b[g][ci])
        write_record(f, "fc.weight", model.fc_w)
        write_record(f, "fc.bias", model.fc_b)
        if model.channel_mean is not None:
            write_record(f, "channel_mean", model.channel_mean)
    return Path(path)


def _expect(f, name: str, shape: tuple) -> np.ndarray:
    rec = read_record(f)
    if rec is None:
        raise FormatError(f"missing record {name!r}")
    got_name, arr = rec
    if got_name != name:
        raise FormatError(f"expected record {name!r}, found {got_name!r}")
    if arr.shape != shape:
        raise DimMismatchError(f"record {name!r} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"record {name!r} contains non-finite values")
    return arr


def load_checkpoint(path) -> GroupModel:
    with open(path, "rb") as f:
        magic = read_exact(f, 4, "the magic bytes")
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version = read_u32(f, "the version field")
        if version != VERSION:
            raise BadVersionError(f"unsupported version {version}, expected {VERSION}")
        num_groups = read_u32(f, "the group count")
        channels = read_u32(f, "the channel count")
        num_classes = read_u32(f, "the class count")
        trained = read_u32(f, "the trained-group count")
        try:
            arch = GroupNetArch(num_groups=num_groups, channels_per_group=channels,
                                num_classes=num_classes)
        except ConfigError as e:
            raise FormatError(f"header describes an invalid model: {e}") from e
        if trained > num_groups:
            raise FormatError(f"trained groups {trained} exceeds group count {num_groups}")
        model = build_model(arch)
        model.trained_groups = trained
        for ci, ld in enumerate(arch.conv_layers()):
            for g in range(arch.num_groups):
                model.conv_w[g][ci] = _expect(f, f"{ld.name}.g{g}.weight",
                                              model.conv_w[g][ci].shape)
                model.conv_b[g][ci] = _expect(f, f"{ld.name}.g{g}.bias",
                                              model.conv_b[g][ci].shape)
        model.fc_w = _expect(f, "fc.weight", (num_classes, arch.fc_input_dim))
        model.fc_b = _expect(f, "fc.bias", (num_classes,))
        rec = read_record(f)
        if rec is not None:
            name, arr = rec
            if name != "channel_mean":
                raise FormatError(f"unexpected trailing record {name!r}")
            if arr.shape != (arch.input_shape[0],):
                raise DimMismatchError(f"channel_mean has shape {arr.shape}, "
                                       f"expected {(arch.input_shape[0],)}")
            model.channel_mean = arr
            if read_record(f) is not None:
                raise FormatError("trailing data after the final record")
    return model
