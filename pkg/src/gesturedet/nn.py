"""Dense conv/activation kernels with hand-written reverse-mode gradients.

Tensors are NHWC numpy arrays. Convolutions use cross-correlation semantics
with "same" zero padding and output size ceil(in/stride); padding splits
floor/ceil between the leading and trailing edge (extra row/col at the
bottom/right). 3x3 convolutions go through im2col + one GEMM; 1x1 take the
reshape fast path; depthwise kernels are accumulated as kh*kw strided
multiply-adds. All kernels preserve the input dtype, so the same code runs
float32 for training and float64 for gradient verification.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def out_size(n: int, stride: int) -> int:
    return -(-n // stride)


def _pad_same(x: np.ndarray, kh: int, kw: int, stride: int) -> tuple[np.ndarray, int, int]:
    n, h, w, c = x.shape
    oh, ow = out_size(h, stride), out_size(w, stride)
    ph = max(0, (oh - 1) * stride + kh - h)
    pw = max(0, (ow - 1) * stride + kw - w)
    pt, pl = ph // 2, pw // 2
    xp = np.pad(x, ((0, 0), (pt, ph - pt), (pl, pw - pl), (0, 0)))
    return xp, pt, pl


def _strided_view(xp: np.ndarray, kh: int, kw: int, stride: int,
                  oh: int, ow: int) -> np.ndarray:
    """(N, OH, OW, kh, kw, C) window view over the padded input."""
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))     # N, H*, W*, C, kh, kw
    win = win[:, ::stride, ::stride][:, :oh, :ow]
    return win.transpose(0, 1, 2, 4, 5, 3)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Standard convolution: x (N,H,W,C) * w (kh,kw,C,Co) + b (Co,)."""
    y, _ = conv2d_with_cache(x, w, b, stride)
    return y


def conv2d_with_cache(x, w, b, stride=1):
    n, h, wd, c = x.shape
    kh, kw, cin, cout = w.shape
    if cin != c:
        raise ValueError(f"conv2d channel mismatch: input {c}, weights {cin}")
    if b.shape != (cout,):
        raise ValueError(f"conv2d bias shape {b.shape} != ({cout},)")
    oh, ow = out_size(h, stride), out_size(wd, stride)
    if kh == 1 and kw == 1 and stride == 1:
        y = x.reshape(-1, c) @ w.reshape(c, cout) + b
        return y.reshape(n, h, wd, cout), ("1x1", x, w)
    xp, pt, pl = _pad_same(x, kh, kw, stride)
    cols = _strided_view(xp, kh, kw, stride, oh, ow).reshape(n * oh * ow, kh * kw * c)
    y = cols @ w.reshape(kh * kw * c, cout) + b
    return y.reshape(n, oh, ow, cout), ("gemm", x.shape, xp.shape, pt, pl, cols, w, stride)


def conv2d_backward(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) of a conv2d call recorded by conv2d_with_cache."""
    if cache[0] == "1x1":
        _, x, w = cache
        n, h, wd, c = x.shape
        cout = w.shape[3]
        dy2 = dy.reshape(-1, cout)
        x2 = x.reshape(-1, c)
        dw = (x2.T @ dy2).reshape(1, 1, c, cout)
        db = dy2.sum(axis=0)
        dx = (dy2 @ w.reshape(c, cout).T).reshape(n, h, wd, c)
        return dx, dw, db
    _, x_shape, xp_shape, pt, pl, cols, w, stride = cache
    n, h, wd, c = x_shape
    kh, kw, _, cout = w.shape
    oh, ow = dy.shape[1], dy.shape[2]
    dy2 = dy.reshape(n * oh * ow, cout)
    dw = (cols.T @ dy2).reshape(kh, kw, c, cout)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ w.reshape(kh * kw * c, cout).T).reshape(n, oh, ow, kh, kw, c)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    he = (oh - 1) * stride + 1
    we = (ow - 1) * stride + 1
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + he : stride, j : j + we : stride, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, pt : pt + h, pl : pl + wd, :]
    return dx, dw, db


def depthwise_conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                     stride: int = 1) -> np.ndarray:
    """Per-channel convolution: x (N,H,W,C) * w (kh,kw,C) + b (C,)."""
    y, _ = depthwise_conv2d_with_cache(x, w, b, stride)
    return y


def depthwise_conv2d_with_cache(x, w, b, stride=1):
    n, h, wd, c = x.shape
    kh, kw, cw = w.shape
    if cw != c:
        raise ValueError(f"depthwise channel mismatch: input {c}, weights {cw}")
    if b.shape != (c,):
        raise ValueError(f"depthwise bias shape {b.shape} != ({c},)")
    oh, ow = out_size(h, stride), out_size(wd, stride)
    xp, pt, pl = _pad_same(x, kh, kw, stride)
    y = np.empty((n, oh, ow, c), dtype=x.dtype)
    y[:] = b
    he = (oh - 1) * stride + 1
    we = (ow - 1) * stride + 1
    for i in range(kh):
        for j in range(kw):
            y += xp[:, i : i + he : stride, j : j + we : stride, :] * w[i, j]
    return y, (x.shape, xp, pt, pl, w, stride)


def depthwise_conv2d_backward(dy, cache):
    x_shape, xp, pt, pl, w, stride = cache
    n, h, wd, c = x_shape
    kh, kw, _ = w.shape
    oh, ow = dy.shape[1], dy.shape[2]
    he = (oh - 1) * stride + 1
    we = (ow - 1) * stride + 1
    dw = np.empty_like(w)
    dxp = np.zeros(xp.shape, dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            view = xp[:, i : i + he : stride, j : j + we : stride, :]
            dw[i, j] = (view * dy).sum(axis=(0, 1, 2))
            dxp[:, i : i + he : stride, j : j + we : stride, :] += dy * w[i, j]
    db = dy.sum(axis=(0, 1, 2))
    dx = dxp[:, pt : pt + h, pl : pl + wd, :]
    return dx, dw, db


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def smooth_l1(x):
    """0.5*x^2 below unit error, |x| - 0.5 above; both branches meet at |x| = 1."""
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1_grad(x):
    return np.clip(x, -1.0, 1.0)
