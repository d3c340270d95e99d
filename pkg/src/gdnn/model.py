"""Grouped network: architecture description, parameters, and inference.

The network is a stack of conv/lrn/pool layers replicated across
`num_groups` independent groups. Every group sees the full input image at
its first conv layer; after that, channels never cross group boundaries.
Group feature vectors are concatenated in ascending group order and fed to
a single fully connected classifier whose weight columns are logically
partitioned per group, which is what makes narrowing to the first k groups
a pure column-prefix operation.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, InputError
from .layers import (ConvSpec, LrnSpec, PoolSpec, conv_backward, conv_forward,
                     fc_forward, lrn_backward, lrn_forward, maxpool_backward,
                     maxpool_forward, relu_backward, relu_forward, softmax)


@dataclass(frozen=True)
class LayerDef:
    name: str
    op: str  # "conv" | "lrn" | "pool"; conv includes a trailing relu
    spec: ConvSpec | LrnSpec | PoolSpec

    def __post_init__(self):
        expected = {"conv": ConvSpec, "lrn": LrnSpec, "pool": PoolSpec}
        if self.op not in expected:
            raise ConfigError(f"unknown layer op {self.op!r}")
        if not isinstance(self.spec, expected[self.op]):
            raise ConfigError(f"layer {self.name!r}: op {self.op!r} needs {expected[self.op].__name__}")


def standard_layers(channels: int = 16) -> tuple[LayerDef, ...]:
    """Per-group layer stack for 32x32 RGB inputs. The first conv consumes
    the full 3-channel image; all later convs stay within the group."""
    return (
        LayerDef("conv1", "conv", ConvSpec(3, channels, 3, 1, 0)),
        LayerDef("norm1", "lrn", LrnSpec(5, 1e-4, 0.75, 1.0)),
        LayerDef("pool1", "pool", PoolSpec(4, 1)),
        LayerDef("conv2", "conv", ConvSpec(channels, channels, 5, 1, 2)),
        LayerDef("norm2", "lrn", LrnSpec(5, 1e-4, 0.75, 1.0)),
        LayerDef("pool2", "pool", PoolSpec(3, 2)),
        LayerDef("conv3", "conv", ConvSpec(channels, channels, 3, 1, 1)),
        LayerDef("conv4", "conv", ConvSpec(channels, channels, 3, 1, 1)),
        LayerDef("conv5", "conv", ConvSpec(channels, channels, 3, 1, 1)),
        LayerDef("pool5", "pool", PoolSpec(3, 2)),
    )


@dataclass(frozen=True)
class GroupNetArch:
    num_groups: int = 4
    channels_per_group: int = 16
    num_classes: int = 10
    input_shape: tuple[int, int, int] = (3, 32, 32)
    layers: tuple[LayerDef, ...] = ()
    # derived, filled by __post_init__
    feature_shape: tuple[int, int, int] = field(init=False, compare=False, repr=False)
    feature_dim: int = field(init=False, compare=False, repr=False)
    conv_macs: tuple[int, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.num_groups < 1:
            raise ConfigError(f"num_groups must be >= 1, got {self.num_groups}")
        if self.channels_per_group < 1:
            raise ConfigError(f"channels_per_group must be >= 1, got {self.channels_per_group}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.input_shape) != 3 or any(n < 1 for n in self.input_shape):
            raise ConfigError(f"bad input_shape {self.input_shape}")
        if not self.layers:
            object.__setattr__(self, "layers", standard_layers(self.channels_per_group))
        c, h, w = self.input_shape
        macs = []
        for ld in self.layers:
            if ld.op == "conv":
                if ld.spec.in_channels != c:
                    raise ConfigError(f"layer {ld.name!r} expects {ld.spec.in_channels} channels, gets {c}")
                ho, wo = ld.spec.out_size(h), ld.spec.out_size(w)
                macs.append(ld.spec.out_channels * ho * wo * ld.spec.in_channels * ld.spec.kernel ** 2)
                c, h, w = ld.spec.out_channels, ho, wo
            elif ld.op == "pool":
                h, w = ld.spec.out_size(h), ld.spec.out_size(w)
        object.__setattr__(self, "feature_shape", (c, h, w))
        object.__setattr__(self, "feature_dim", c * h * w)
        object.__setattr__(self, "conv_macs", tuple(macs))

    @property
    def fc_input_dim(self) -> int:
        return self.num_groups * self.feature_dim

    def conv_layers(self) -> list[LayerDef]:
        return [ld for ld in self.layers if ld.op == "conv"]

    @property
    def is_standard(self) -> bool:
        return (self.input_shape == (3, 32, 32)
                and self.layers == standard_layers(self.channels_per_group))


@dataclass
class GroupModel:
    arch: GroupNetArch
    conv_w: list[list[np.ndarray]]   # [group][conv index]
    conv_b: list[list[np.ndarray]]
    fc_w: np.ndarray                 # [num_classes, num_groups * feature_dim]
    fc_b: np.ndarray                 # [num_classes]
    trained_groups: int = 0
    channel_mean: np.ndarray | None = None
    init_seed: int = 0


def build_model(arch: GroupNetArch, seed: int = 0) -> GroupModel:
    """Allocate a zero-initialized model. The seed is recorded for the
    trainer's per-group initialization streams; zero parameters make the
    untouched-group invariants trivially checkable."""
    convs = arch.conv_layers()
    conv_w = [[np.zeros((ld.spec.out_channels, ld.spec.in_channels, ld.spec.kernel, ld.spec.kernel),
                        np.float32) for ld in convs]
              for _ in range(arch.num_groups)]
    conv_b = [[np.zeros(ld.spec.out_channels, np.float32) for ld in convs]
              for _ in range(arch.num_groups)]
    fc_w = np.zeros((arch.num_classes, arch.fc_input_dim), np.float32)
    fc_b = np.zeros(arch.num_classes, np.float32)
    return GroupModel(arch, conv_w, conv_b, fc_w, fc_b, init_seed=seed)


def clone_model(model: GroupModel) -> GroupModel:
    return GroupModel(
        model.arch,
        [[w.copy() for w in ws] for ws in model.conv_w],
        [[b.copy() for b in bs] for bs in model.conv_b],
        model.fc_w.copy(), model.fc_b.copy(),
        model.trained_groups,
        None if model.channel_mean is None else model.channel_mean.copy(),
        model.init_seed)


def group_tensor_names(arch: GroupNetArch, g: int) -> list[str]:
    names = []
    for ld in arch.conv_layers():
        names.append(f"{ld.name}.g{g}.weight")
        names.append(f"{ld.name}.g{g}.bias")
    return names


def group_tensors(model: GroupModel, g: int) -> list[np.ndarray]:
    out = []
    for ci in range(len(model.arch.conv_layers())):
        out.append(model.conv_w[g][ci])
        out.append(model.conv_b[g][ci])
    return out


def group_digest(model: GroupModel, g: int) -> str:
    """SHA-256 over the group's conv parameters, for freeze verification."""
    h = hashlib.sha256()
    for t in group_tensors(model, g):
        h.update(np.ascontiguousarray(t).tobytes())
    return h.hexdigest()


def group_is_zero(model: GroupModel, g: int) -> bool:
    return all(not t.any() for t in group_tensors(model, g))


# ------------------------------------------------------------- inference


def group_features(model: GroupModel, image: np.ndarray, g: int,
                   collect_ctx: bool = False):
    """Run one group's conv stack. Returns the flattened feature vector,
    plus the per-layer backward contexts when collect_ctx is set."""
    h = image
    ctxs = [] if collect_ctx else None
    ci = 0
    for ld in model.arch.layers:
        if ld.op == "conv":
            h, ctx = conv_forward(h, model.conv_w[g][ci], model.conv_b[g][ci], ld.spec, name=ld.name)
            h, rctx = relu_forward(h, name=ld.name)
            if collect_ctx:
                ctxs.append(("conv", ctx))
                ctxs.append(("relu", rctx))
            ci += 1
        elif ld.op == "lrn":
            h, ctx = lrn_forward(h, ld.spec, name=ld.name)
            if collect_ctx:
                ctxs.append(("lrn", ctx))
        else:
            h, ctx = maxpool_forward(h, ld.spec, name=ld.name)
            if collect_ctx:
                ctxs.append(("pool", ctx))
    feats = h.reshape(-1)
    return (feats, ctxs) if collect_ctx else feats


def group_backward(model: GroupModel, ctxs: list, dfeat: np.ndarray):
    """Backpropagate a feature-vector gradient through one group's stack.
    Returns per-conv (dw, db) pairs in conv layer order. The first conv's
    input gradient is never needed and is skipped."""
    dh = np.ascontiguousarray(dfeat).reshape(model.arch.feature_shape)
    grads: list = []
    conv_seen = sum(1 for kind, _ in ctxs if kind == "conv")
    for kind, ctx in reversed(ctxs):
        if kind == "relu":
            dh = relu_backward(ctx, dh)
        elif kind == "conv":
            conv_seen -= 1
            dx, dw, db = conv_backward(ctx, dh, need_input_grad=conv_seen > 0)
            grads.append((dw, db))
            if dx is not None:
                dh = dx
        elif kind == "lrn":
            dh = lrn_backward(ctx, dh)
        else:
            dh = maxpool_backward(ctx, dh)
    grads.reverse()
    return grads


def _check_width(model: GroupModel, k) -> int:
    if not isinstance(k, (int, np.integer)):
        raise ConfigError(f"width k must be an integer, got {type(k).__name__}")
    k = int(k)
    if not 1 <= k <= model.arch.num_groups:
        raise ConfigError(f"width k={k} outside 1..{model.arch.num_groups}")
    if k > model.trained_groups:
        raise ConfigError(f"width k={k} exceeds trained groups ({model.trained_groups})")
    return k


def forward(model: GroupModel, image: np.ndarray, k: int):
    """Inference at width k: run groups 0..k-1, concatenate their features
    in group order, and classify with the first k column blocks of the
    fully connected layer. Returns (logits, probs)."""
    k = _check_width(model, k)
    if not isinstance(image, np.ndarray) or image.dtype != np.float32:
        raise InputError("image must be a float32 numpy array")
    if image.shape != model.arch.input_shape:
        raise DimensionError(f"image shape {image.shape}, expected {model.arch.input_shape}")
    feats = np.concatenate([group_features(model, image, g) for g in range(k)])
    fd = model.arch.feature_dim
    logits, _ = fc_forward(feats, model.fc_w[:, :k * fd], model.fc_b)
    return logits, softmax(logits)


def predict(model: GroupModel, image: np.ndarray, k: int) -> int:
    logits, _ = forward(model, image, k)
    return int(np.argmax(logits))


# ------------------------------------------------------------ accounting


def _arch_of(obj) -> GroupNetArch:
    return obj.arch if isinstance(obj, GroupModel) else obj


def param_count(obj, k: int) -> int:
    """Parameters active at width k (k = 0 counts only the fc bias)."""
    arch = _arch_of(obj)
    if not 0 <= k <= arch.num_groups:
        raise ConfigError(f"width k={k} outside 0..{arch.num_groups}")
    per_group = sum(ld.spec.out_channels * (ld.spec.in_channels * ld.spec.kernel ** 2 + 1)
                    for ld in arch.conv_layers())
    return k * per_group + arch.num_classes * (k * arch.feature_dim) + arch.num_classes


def model_size_bytes(obj, k: int) -> int:
    """Size of the active parameter set in float32 storage."""
    return 4 * param_count(obj, k)


def flops(obj, k: int) -> int:
    """Multiply-accumulate count of one forward pass at width k. Exactly
    linear in k because every group (first conv included) costs the same."""
    arch = _arch_of(obj)
    if not 1 <= k <= arch.num_groups:
        raise ConfigError(f"width k={k} outside 1..{arch.num_groups}")
    per_group = sum(arch.conv_macs) + arch.num_classes * arch.feature_dim
    return k * per_group
