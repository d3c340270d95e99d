"""Pure numpy kernels.

Mirrors `gdnn.kernels.jit` exactly, including the observable accumulation
orders: convolution and fully connected outputs here are bit-identical to
the numba backend, not merely close. The convolution loops run over
(channel, ki, kj) with vectorized spatial slices, which performs each
output element's additions in the same ascending tap order as the scalar
kernels. The fully connected forward uses np.add.accumulate, whose prefix
sums force strictly sequential addition. Backward passes carry no order
contract and may use any deterministic reduction.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad2d(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, b, stride, pad):
    C_out, C_in, K, _ = w.shape
    xp = _pad2d(x, pad)
    Hp, Wp = xp.shape[1], xp.shape[2]
    Ho = (Hp - K) // stride + 1
    Wo = (Wp - K) // stride + 1
    y = np.zeros((C_out, Ho, Wo), np.float32)
    for c in range(C_in):
        for ki in range(K):
            for kj in range(K):
                win = xp[c, ki:ki + (Ho - 1) * stride + 1:stride,
                         kj:kj + (Wo - 1) * stride + 1:stride]
                y += w[:, c, ki, kj, None, None] * win[None, :, :]
    y += b[:, None, None]
    return y


def conv2d_backward_input(w, dy, stride, pad, H, W):
    C_out, C_in, K, _ = w.shape
    Ho, Wo = dy.shape[1], dy.shape[2]
    dxp = np.zeros((C_in, H + 2 * pad, W + 2 * pad), np.float32)
    for c in range(C_in):
        for ki in range(K):
            for kj in range(K):
                sub = dxp[c, ki:ki + (Ho - 1) * stride + 1:stride,
                          kj:kj + (Wo - 1) * stride + 1:stride]
                sub += np.einsum('o,ohw->hw', w[:, c, ki, kj], dy)
    if pad == 0:
        return dxp
    return np.ascontiguousarray(dxp[:, pad:pad + H, pad:pad + W])


def conv2d_backward_params(x, dy, K, stride, pad):
    C_out, Ho, Wo = dy.shape
    xp = _pad2d(x, pad)
    db = dy.sum(axis=(1, 2))
    dw = np.empty((C_out, x.shape[0], K, K), np.float32)
    for ki in range(K):
        for kj in range(K):
            win = xp[:, ki:ki + (Ho - 1) * stride + 1:stride,
                     kj:kj + (Wo - 1) * stride + 1:stride]
            dw[:, :, ki, kj] = np.einsum('ohw,chw->oc', dy, win)
    return dw, db


def relu_forward(x):
    return np.maximum(x, np.float32(0.0))


def relu_backward(x, dy):
    return np.where(x > 0, dy, np.float32(0.0))


def lrn_forward(x, local_size, qf, bf, kf):
    C = x.shape[0]
    h = (local_size - 1) // 2
    x2 = x * x
    acc = np.zeros_like(x)
    for off in range(-h, h + 1):
        c0 = max(0, -off)
        c1 = min(C, C - off)
        acc[c0:c1] += x2[c0 + off:c1 + off]
    scale = kf + qf * acc
    if bf == np.float32(0.75):
        p = np.float32(1.0) / np.sqrt(scale * np.sqrt(scale))
    else:
        p = scale ** (-bf)
    return x * p, scale


def lrn_backward(x, scale, dy, local_size, qf, bf):
    C = x.shape[0]
    h = (local_size - 1) // 2
    if bf == np.float32(0.75):
        p = np.float32(1.0) / np.sqrt(scale * np.sqrt(scale))
    else:
        p = scale ** (-bf)
    t = dy * x * p / scale
    s = np.zeros_like(x)
    for off in range(-h, h + 1):
        c0 = max(0, -off)
        c1 = min(C, C - off)
        s[c0:c1] += t[c0 + off:c1 + off]
    return dy * p - (np.float32(2.0) * qf * bf) * x * s


def maxpool_forward(x, kernel, stride):
    C, H, W = x.shape
    win = sliding_window_view(x, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    Ho, Wo = win.shape[1], win.shape[2]
    flat = win.reshape(C, Ho, Wo, kernel * kernel)
    am = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, am[..., None], axis=-1)[..., 0]
    i_idx = np.arange(Ho, dtype=np.int64)[None, :, None]
    j_idx = np.arange(Wo, dtype=np.int64)[None, None, :]
    arg = (i_idx * stride + am // kernel) * W + (j_idx * stride + am % kernel)
    return np.ascontiguousarray(y), arg.astype(np.int32)


def maxpool_backward(arg, dy, H, W):
    C = dy.shape[0]
    dx = np.zeros((C, H * W), np.float32)
    c_idx = np.arange(C, dtype=np.int64)[:, None]
    np.add.at(dx, (c_idx, arg.reshape(C, -1).astype(np.int64)), dy.reshape(C, -1))
    return dx.reshape(C, H, W)


def fc_forward(x, w, b):
    # prefix sums are computed strictly left to right, so the terms add in
    # ascending input index order starting from the bias
    terms = np.concatenate([b[:, None], w * x[None, :]], axis=1)
    return np.add.accumulate(terms, axis=1)[:, -1]


def fc_backward(x, w, dy):
    dx = np.einsum('o,od->d', dy, w).astype(np.float32, copy=False)
    dw = np.outer(dy, x)
    db = dy.copy()
    return dx, dw, db


def softmax(x):
    e = np.exp(x - x.max())
    return e / np.add.accumulate(e)[-1]
