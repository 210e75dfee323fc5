"""Layer primitives with explicit backward passes.

Activations are kept channel-last, ``(batch, length, channels)``, so every
convolution is a single matmul over sliding windows. Each ``*_forward``
returns ``(output, cache)``; the matching ``*_backward`` maps the upstream
gradient and cache to input (and parameter) gradients.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv1d_forward(x, weight, bias):
    """'Same'-padded stride-1 cross-correlation.

    x: (B, L, C_in); weight: (C_out, C_in, K) with K odd; bias: (C_out,).
    """
    c_out, c_in, k = weight.shape
    pad = k // 2
    B, L, _ = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    cols = sliding_window_view(xp, k, axis=1)  # (B, L, C_in, K)
    cols = cols.reshape(B * L, c_in * k)
    w2 = weight.reshape(c_out, c_in * k)
    y = cols @ w2.T + bias
    return y.reshape(B, L, c_out), (cols, x.shape, weight)


def conv1d_backward(dy, cache, need_input_grad=True):
    """Returns ``(dx, dweight, dbias)``; ``dx`` is ``None`` if not requested."""
    cols, x_shape, weight = cache
    c_out, c_in, k = weight.shape
    B, L, _ = x_shape
    pad = k // 2
    dy2 = dy.reshape(B * L, c_out)
    dw = (dy2.T @ cols).reshape(weight.shape)
    db = dy2.sum(axis=0)
    if not need_input_grad:
        return None, dw, db
    dcols = (dy2 @ weight.reshape(c_out, c_in * k)).reshape(B, L, c_in, k)
    dxp = np.zeros((B, L + 2 * pad, c_in))
    for j in range(k):
        dxp[:, j : j + L, :] += dcols[:, :, :, j]
    return dxp[:, pad : pad + L, :], dw, db


def relu_forward(x):
    mask = x > 0
    return np.maximum(x, 0.0), mask


def relu_backward(dy, mask):
    return dy * mask


def maxpool_forward(x, size):
    """Non-overlapping max pool over length; trailing remainder is dropped.

    Ties resolve to the first position in the window.
    """
    B, L, C = x.shape
    n = L // size
    y = x[:, 0 : n * size : size, :].copy()
    idx = np.zeros((B, n, C), dtype=np.int8)
    for j in range(1, size):
        cand = x[:, j : n * size : size, :]
        upd = cand > y
        np.copyto(y, cand, where=upd)
        np.copyto(idx, j, where=upd)
    return y, (idx, x.shape, size)


def maxpool_backward(dy, cache):
    idx, x_shape, size = cache
    n = dy.shape[1]
    dx = np.zeros(x_shape)
    for j in range(size):
        np.copyto(dx[:, j : n * size : size, :], dy, where=idx == j)
    return dx


def gap_forward(x):
    return x.mean(axis=1), x.shape


def gap_backward(dy, x_shape):
    B, L, C = x_shape
    return np.broadcast_to(dy[:, None, :] / L, x_shape).copy()


def dense_forward(x, weight, bias):
    """x: (B, F_in); weight: (F_out, F_in)."""
    return x @ weight.T + bias, (x, weight)


def dense_backward(dy, cache):
    x, weight = cache
    return dy @ weight, dy.T @ x, dy.sum(axis=0)
