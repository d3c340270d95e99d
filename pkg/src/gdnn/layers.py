"""Layer specs, input validation, and forward/backward wrappers.

Each forward wrapper validates its inputs, dispatches to the active kernel
backend, and returns (output, ctx). The ctx object carries exactly what the
matching backward needs; passing ctx=None to a backward raises StateError.
All tensors are float32. Wrappers reject other dtypes rather than casting
silently, because accumulation order and rounding are part of the contract.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import backend
from .errors import ConfigError, DimensionError, InputError, StateError

CE_EPS = 1e-12


# ---------------------------------------------------------------- specs


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError(f"conv channels must be >= 1, got {self.in_channels}x{self.out_channels}")
        if self.kernel < 1:
            raise ConfigError(f"conv kernel must be >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ConfigError(f"conv stride must be >= 1, got {self.stride}")
        if self.pad < 0:
            raise ConfigError(f"conv pad must be >= 0, got {self.pad}")

    def out_size(self, n: int) -> int:
        span = n + 2 * self.pad - self.kernel
        if span < 0:
            raise ConfigError(f"conv kernel {self.kernel} exceeds padded input {n + 2 * self.pad}")
        return span // self.stride + 1


@dataclass(frozen=True)
class LrnSpec:
    local_size: int = 5
    alpha: float = 1e-4
    beta: float = 0.75
    k: float = 1.0

    def __post_init__(self):
        if self.local_size < 1 or self.local_size % 2 == 0:
            raise ConfigError(f"lrn local_size must be odd and >= 1, got {self.local_size}")
        # alpha = 0 is permitted: the layer degenerates to scaling by k^-beta,
        # which gives an exact identity when k = 1 (useful as a test mode)
        if self.alpha < 0:
            raise ConfigError(f"lrn alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise ConfigError(f"lrn beta must be > 0, got {self.beta}")
        if self.k <= 0:
            raise ConfigError(f"lrn k must be > 0, got {self.k}")


@dataclass(frozen=True)
class PoolSpec:
    kernel: int
    stride: int

    def __post_init__(self):
        if self.kernel < 1:
            raise ConfigError(f"pool kernel must be >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ConfigError(f"pool stride must be >= 1, got {self.stride}")

    def out_size(self, n: int) -> int:
        if n < self.kernel:
            raise ConfigError(f"pool kernel {self.kernel} exceeds input {n}")
        return (n - self.kernel) // self.stride + 1


# ---------------------------------------------------------- validation


def _check(x, ndim: int, name: str, *, finite: bool = True) -> np.ndarray:
    if not isinstance(x, np.ndarray):
        raise InputError(f"{name} must be a numpy array, got {type(x).__name__}")
    if x.dtype != np.float32:
        raise InputError(f"{name} must be float32, got {x.dtype}")
    if x.ndim != ndim:
        raise DimensionError(f"{name} must have {ndim} dims, got shape {x.shape}")
    if finite and not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains non-finite values")
    return np.ascontiguousarray(x)


def _need_ctx(ctx, name: str):
    if ctx is None:
        raise StateError(f"{name} backward called without a forward context")


# ----------------------------------------------------------------- conv


@dataclass
class ConvCtx:
    x: np.ndarray
    w: np.ndarray
    spec: ConvSpec


def conv_forward(x, w, b, spec: ConvSpec, name: str = "conv"):
    x = _check(x, 3, f"{name} input")
    w = _check(w, 4, f"{name} weight", finite=False)
    b = _check(b, 1, f"{name} bias", finite=False)
    if x.shape[0] != spec.in_channels:
        raise DimensionError(f"{name} expects {spec.in_channels} input channels, got {x.shape[0]}")
    if w.shape != (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel):
        raise DimensionError(f"{name} weight shape {w.shape} does not match spec {spec}")
    if b.shape != (spec.out_channels,):
        raise DimensionError(f"{name} bias shape {b.shape} does not match {spec.out_channels} channels")
    spec.out_size(x.shape[1])
    spec.out_size(x.shape[2])
    y = backend.active().conv2d_forward(x, w, b, spec.stride, spec.pad)
    return y, ConvCtx(x, w, spec)


def conv_backward(ctx: ConvCtx | None, dy, *, need_input_grad: bool = True):
    _need_ctx(ctx, "conv")
    dy = _check(dy, 3, "conv upstream gradient")
    spec = ctx.spec
    ho = spec.out_size(ctx.x.shape[1])
    wo = spec.out_size(ctx.x.shape[2])
    if dy.shape != (spec.out_channels, ho, wo):
        raise DimensionError(f"conv upstream gradient shape {dy.shape}, expected {(spec.out_channels, ho, wo)}")
    kern = backend.active()
    dw, db = kern.conv2d_backward_params(ctx.x, dy, spec.kernel, spec.stride, spec.pad)
    dx = None
    if need_input_grad:
        dx = kern.conv2d_backward_input(ctx.w, dy, spec.stride, spec.pad,
                                        ctx.x.shape[1], ctx.x.shape[2])
    return dx, dw, db


# ----------------------------------------------------------------- relu


def relu_forward(x, name: str = "relu"):
    x = _check(x, 3, f"{name} input")
    return backend.active().relu_forward(x), x


def relu_backward(ctx, dy):
    _need_ctx(ctx, "relu")
    dy = _check(dy, 3, "relu upstream gradient")
    if dy.shape != ctx.shape:
        raise DimensionError(f"relu upstream gradient shape {dy.shape}, expected {ctx.shape}")
    return backend.active().relu_backward(ctx, dy)


# ------------------------------------------------------------------ lrn


@dataclass
class LrnCtx:
    x: np.ndarray
    scale: np.ndarray
    spec: LrnSpec


def lrn_forward(x, spec: LrnSpec, name: str = "lrn"):
    x = _check(x, 3, f"{name} input")
    y, scale = backend.active().lrn_forward(
        x, spec.local_size,
        np.float32(spec.alpha / spec.local_size),
        np.float32(spec.beta), np.float32(spec.k))
    return y, LrnCtx(x, scale, spec)


def lrn_backward(ctx: LrnCtx | None, dy):
    _need_ctx(ctx, "lrn")
    dy = _check(dy, 3, "lrn upstream gradient")
    if dy.shape != ctx.x.shape:
        raise DimensionError(f"lrn upstream gradient shape {dy.shape}, expected {ctx.x.shape}")
    spec = ctx.spec
    return backend.active().lrn_backward(
        ctx.x, ctx.scale, dy, spec.local_size,
        np.float32(spec.alpha / spec.local_size), np.float32(spec.beta))


# ----------------------------------------------------------------- pool


@dataclass
class PoolCtx:
    arg: np.ndarray
    height: int
    width: int


def maxpool_forward(x, spec: PoolSpec, name: str = "pool"):
    x = _check(x, 3, f"{name} input")
    spec.out_size(x.shape[1])
    spec.out_size(x.shape[2])
    y, arg = backend.active().maxpool_forward(x, spec.kernel, spec.stride)
    return y, PoolCtx(arg, x.shape[1], x.shape[2])


def maxpool_backward(ctx: PoolCtx | None, dy):
    _need_ctx(ctx, "pool")
    dy = _check(dy, 3, "pool upstream gradient")
    if dy.shape != ctx.arg.shape:
        raise DimensionError(f"pool upstream gradient shape {dy.shape}, expected {ctx.arg.shape}")
    return backend.active().maxpool_backward(ctx.arg, dy, ctx.height, ctx.width)


# ------------------------------------------------------------------- fc


@dataclass
class FcCtx:
    x: np.ndarray
    w: np.ndarray


def fc_forward(x, w, b, name: str = "fc"):
    x = _check(x, 1, f"{name} input")
    w = _check(w, 2, f"{name} weight", finite=False)
    b = _check(b, 1, f"{name} bias", finite=False)
    if w.shape[1] != x.shape[0]:
        raise DimensionError(f"{name} weight expects {w.shape[1]} inputs, got {x.shape[0]}")
    if b.shape[0] != w.shape[0]:
        raise DimensionError(f"{name} bias length {b.shape[0]}, expected {w.shape[0]}")
    y = backend.active().fc_forward(x, w, b)
    return y, FcCtx(x, w)


def fc_backward(ctx: FcCtx | None, dy):
    _need_ctx(ctx, "fc")
    dy = _check(dy, 1, "fc upstream gradient")
    if dy.shape[0] != ctx.w.shape[0]:
        raise DimensionError(f"fc upstream gradient length {dy.shape[0]}, expected {ctx.w.shape[0]}")
    return backend.active().fc_backward(ctx.x, ctx.w, dy)


# ------------------------------------------------------ softmax + loss


def softmax(logits):
    logits = _check(logits, 1, "softmax input")
    if logits.size == 0:
        raise DimensionError("softmax input is empty")
    return backend.active().softmax(logits)


def cross_entropy(probs, label: int):
    """Loss and gradient for softmax cross entropy on a single sample.

    `probs` must already be softmax output. The returned gradient is with
    respect to the pre-softmax logits: probs - onehot(label).
    """
    probs = _check(probs, 1, "probabilities")
    if not 0 <= int(label) < probs.shape[0]:
        raise InputError(f"label {label} out of range for {probs.shape[0]} classes")
    label = int(label)
    loss = -float(np.log(max(float(probs[label]), CE_EPS)))
    dlogits = probs.copy()
    dlogits[label] -= np.float32(1.0)
    return loss, dlogits
