"""Numba kernels.

Accumulation-order contract (shared with the reference backend): every
convolution output element sums its taps in ascending (channel, ki, kj)
order starting from zero, with the bias added last; every fully connected
output starts from the bias and sums terms in ascending input index order.
Max pooling resolves ties toward the lowest flat spatial index. These
orders are observable (float addition is not associative) and tests pin
them against brute-force oracles, so do not reorder the loops.

No fastmath: it licenses reassociation, which breaks the order contract
for a negligible speed gain on these shapes.

The stride-1 convolution paths iterate rows innermost so LLVM can
vectorize the j loop; the generic strided paths are scalar. Inputs are
assumed validated (contiguous float32, matching dims) by `gdnn.layers`.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _pad2d(x, pad):
    if pad == 0:
        return x
    C, H, W = x.shape
    xp = np.zeros((C, H + 2 * pad, W + 2 * pad), np.float32)
    xp[:, pad:pad + H, pad:pad + W] = x
    return xp


@njit(cache=True)
def conv2d_forward(x, w, b, stride, pad):
    C_out, C_in, K, _ = w.shape
    xp = _pad2d(x, pad)
    Hp, Wp = xp.shape[1], xp.shape[2]
    Ho = (Hp - K) // stride + 1
    Wo = (Wp - K) // stride + 1
    y = np.zeros((C_out, Ho, Wo), np.float32)
    if stride == 1:
        for co in range(C_out):
            for c in range(C_in):
                for ki in range(K):
                    for kj in range(K):
                        wv = w[co, c, ki, kj]
                        for i in range(Ho):
                            yrow = y[co, i]
                            xrow = xp[c, i + ki]
                            for j in range(Wo):
                                yrow[j] += wv * xrow[j + kj]
        for co in range(C_out):
            bv = b[co]
            for i in range(Ho):
                yrow = y[co, i]
                for j in range(Wo):
                    yrow[j] += bv
    else:
        for co in range(C_out):
            for i in range(Ho):
                for j in range(Wo):
                    acc = np.float32(0.0)
                    i0 = i * stride
                    j0 = j * stride
                    for c in range(C_in):
                        for ki in range(K):
                            for kj in range(K):
                                acc += w[co, c, ki, kj] * xp[c, i0 + ki, j0 + kj]
                    y[co, i, j] = acc + b[co]
    return y


@njit(cache=True)
def conv2d_backward_input(w, dy, stride, pad, H, W):
    C_out, C_in, K, _ = w.shape
    Ho, Wo = dy.shape[1], dy.shape[2]
    dxp = np.zeros((C_in, H + 2 * pad, W + 2 * pad), np.float32)
    if stride == 1:
        for co in range(C_out):
            for c in range(C_in):
                for ki in range(K):
                    for kj in range(K):
                        wv = w[co, c, ki, kj]
                        for i in range(Ho):
                            dyrow = dy[co, i]
                            dxrow = dxp[c, i + ki]
                            for j in range(Wo):
                                dxrow[j + kj] += wv * dyrow[j]
    else:
        for co in range(C_out):
            for c in range(C_in):
                for ki in range(K):
                    for kj in range(K):
                        wv = w[co, c, ki, kj]
                        for i in range(Ho):
                            for j in range(Wo):
                                dxp[c, i * stride + ki, j * stride + kj] += wv * dy[co, i, j]
    if pad == 0:
        return dxp
    return dxp[:, pad:pad + H, pad:pad + W].copy()


@njit(cache=True)
def conv2d_backward_params(x, dy, K, stride, pad):
    C_in = x.shape[0]
    C_out, Ho, Wo = dy.shape
    xp = _pad2d(x, pad)
    dw = np.empty((C_out, C_in, K, K), np.float32)
    db = np.empty(C_out, np.float32)
    for co in range(C_out):
        s = np.float32(0.0)
        for i in range(Ho):
            dyrow = dy[co, i]
            for j in range(Wo):
                s += dyrow[j]
        db[co] = s
    if stride == 1:
        rowacc = np.empty(Wo, np.float32)
        for co in range(C_out):
            for c in range(C_in):
                for ki in range(K):
                    for kj in range(K):
                        for j in range(Wo):
                            rowacc[j] = 0.0
                        for i in range(Ho):
                            dyrow = dy[co, i]
                            xrow = xp[c, i + ki]
                            for j in range(Wo):
                                rowacc[j] += dyrow[j] * xrow[j + kj]
                        s = np.float32(0.0)
                        for j in range(Wo):
                            s += rowacc[j]
                        dw[co, c, ki, kj] = s
    else:
        for co in range(C_out):
            for c in range(C_in):
                for ki in range(K):
                    for kj in range(K):
                        s = np.float32(0.0)
                        for i in range(Ho):
                            for j in range(Wo):
                                s += dy[co, i, j] * xp[c, i * stride + ki, j * stride + kj]
                        dw[co, c, ki, kj] = s
    return dw, db


@njit(cache=True)
def relu_forward(x):
    y = np.empty_like(x)
    xf = x.ravel()
    yf = y.ravel()
    for i in range(xf.size):
        v = xf[i]
        yf[i] = v if v > 0.0 else np.float32(0.0)
    return y


@njit(cache=True)
def relu_backward(x, dy):
    dx = np.empty_like(dy)
    xf = x.ravel()
    dyf = dy.ravel()
    dxf = dx.ravel()
    for i in range(xf.size):
        dxf[i] = dyf[i] if xf[i] > 0.0 else np.float32(0.0)
    return dx


@njit(cache=True)
def lrn_forward(x, local_size, qf, bf, kf):
    # scale = kf + qf * sum(x[cc]^2) over the clipped channel window;
    # qf is alpha/local_size, matching the Caffe across-channel scheme.
    C, H, W = x.shape
    h = (local_size - 1) // 2
    y = np.empty_like(x)
    scale = np.empty_like(x)
    for c in range(C):
        c0 = c - h if c - h > 0 else 0
        c1 = c + h + 1 if c + h + 1 < C else C
        for i in range(H):
            for j in range(W):
                s = np.float32(0.0)
                for cc in range(c0, c1):
                    v = x[cc, i, j]
                    s += v * v
                sc = kf + qf * s
                scale[c, i, j] = sc
                if bf == np.float32(0.75):
                    p = np.float32(1.0) / np.sqrt(sc * np.sqrt(sc))
                else:
                    p = sc ** (-bf)
                y[c, i, j] = x[c, i, j] * p
    return y, scale


@njit(cache=True)
def lrn_backward(x, scale, dy, local_size, qf, bf):
    # dx[d] = dy[d]*P[d] - 2*qf*bf * x[d] * sum_{c in window(d)} dy[c]*x[c]*P[c]/scale[c]
    # where P = scale^-bf. The window is symmetric, so the channels whose
    # window contains d are exactly the clipped window around d.
    C, H, W = x.shape
    h = (local_size - 1) // 2
    dx = np.empty_like(x)
    pw = np.empty_like(x)
    t = np.empty_like(x)
    for c in range(C):
        for i in range(H):
            for j in range(W):
                sc = scale[c, i, j]
                if bf == np.float32(0.75):
                    p = np.float32(1.0) / np.sqrt(sc * np.sqrt(sc))
                else:
                    p = sc ** (-bf)
                pw[c, i, j] = p
                t[c, i, j] = dy[c, i, j] * x[c, i, j] * p / sc
    tf = np.float32(2.0) * qf * bf
    for c in range(C):
        c0 = c - h if c - h > 0 else 0
        c1 = c + h + 1 if c + h + 1 < C else C
        for i in range(H):
            for j in range(W):
                s = np.float32(0.0)
                for cc in range(c0, c1):
                    s += t[cc, i, j]
                dx[c, i, j] = dy[c, i, j] * pw[c, i, j] - tf * x[c, i, j] * s
    return dx


@njit(cache=True)
def maxpool_forward(x, kernel, stride):
    C, H, W = x.shape
    Ho = (H - kernel) // stride + 1
    Wo = (W - kernel) // stride + 1
    y = np.empty((C, Ho, Wo), np.float32)
    arg = np.empty((C, Ho, Wo), np.int32)
    for c in range(C):
        for i in range(Ho):
            for j in range(Wo):
                i0 = i * stride
                j0 = j * stride
                best = x[c, i0, j0]
                bidx = i0 * W + j0
                for ki in range(kernel):
                    for kj in range(kernel):
                        v = x[c, i0 + ki, j0 + kj]
                        if v > best:
                            best = v
                            bidx = (i0 + ki) * W + (j0 + kj)
                y[c, i, j] = best
                arg[c, i, j] = bidx
    return y, arg


@njit(cache=True)
def maxpool_backward(arg, dy, H, W):
    C, Ho, Wo = dy.shape
    dx = np.zeros((C, H, W), np.float32)
    for c in range(C):
        dxf = dx[c].ravel()
        for i in range(Ho):
            for j in range(Wo):
                dxf[arg[c, i, j]] += dy[c, i, j]
    return dx


@njit(cache=True)
def fc_forward(x, w, b):
    O, D = w.shape
    y = np.empty(O, np.float32)
    for o in range(O):
        acc = b[o]
        for d in range(D):
            acc += w[o, d] * x[d]
        y[o] = acc
    return y


@njit(cache=True)
def fc_backward(x, w, dy):
    O, D = w.shape
    dx = np.zeros(D, np.float32)
    dw = np.empty((O, D), np.float32)
    db = np.empty(O, np.float32)
    for o in range(O):
        g = dy[o]
        db[o] = g
        for d in range(D):
            dw[o, d] = g * x[d]
            dx[d] += w[o, d] * g
    return dx, dw, db


@njit(cache=True)
def softmax(x):
    n = x.size
    m = x[0]
    for i in range(1, n):
        if x[i] > m:
            m = x[i]
    e = np.empty(n, np.float32)
    s = np.float32(0.0)
    for i in range(n):
        v = np.exp(x[i] - m)
        e[i] = v
        s += v
    return e / s
