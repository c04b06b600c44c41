"""Differentiable operations on :class:`~imbts.nn.tensor.Tensor`.

Layouts: sequences are ``(batch, channels, length)``, feature rows are
``(batch, features)``. Every operation computes in float64.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DTYPE, Tensor, make_result

_SIGMOID_LO = np.finfo(DTYPE).tiny
_SIGMOID_HI = np.nextafter(1.0, 0.0)


def _pad_widths(k: int, padding) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        left = (k - 1) // 2
        return left, k - 1 - left
    if isinstance(padding, (int, np.integer)) and padding >= 0:
        return int(padding), int(padding)
    raise ValueError(f"unsupported padding {padding!r}")


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding="valid") -> Tensor:
    """1-D cross-correlation (no kernel flip).

    ``padding`` is ``"valid"``, ``"same"`` (total ``k - 1`` zeros, the odd one
    on the right) or a non-negative int applied to both sides.
    """
    n, c_in, length = x.shape
    c_out, k_c_in, k = kernels.shape
    if k_c_in != c_in:
        raise ValueError(f"conv1d: input has {c_in} channels, kernels expect {k_c_in}")
    if stride < 1:
        raise ValueError("conv1d: stride must be >= 1")
    left, right = _pad_widths(k, padding)
    padded_len = length + left + right
    if k > padded_len:
        raise ValueError(f"conv1d: kernel size {k} exceeds padded length {padded_len}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (left, right))) if left or right else x.data
    windows = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    l_out = windows.shape[2]
    cols = windows.transpose(0, 2, 1, 3).reshape(n * l_out, c_in * k)
    w2 = kernels.data.reshape(c_out, c_in * k)
    out = cols @ w2.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, l_out, c_out).transpose(0, 2, 1)

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(n * l_out, c_out)
        dw = (g2.T @ cols).reshape(kernels.shape) if kernels.requires_grad else None
        db = g.sum(axis=(0, 2)) if bias is not None and bias.requires_grad else None
        dx = None
        if x.requires_grad:
            dcols = (g2 @ w2).reshape(n, l_out, c_in, k)
            dxp = np.zeros((n, c_in, padded_len), dtype=DTYPE)
            span = stride * (l_out - 1) + 1
            for j in range(k):
                dxp[:, :, j:j + span:stride] += dcols[:, :, :, j].transpose(0, 2, 1)
            dx = dxp[:, :, left:left + length]
        return dx, dw, db

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return make_result(np.ascontiguousarray(out), parents, backward)


def max_pool1d(x: Tensor, pool: int, stride: int | None = None) -> Tensor:
    """Max over windows of ``pool`` steps; ties send the gradient to the first index."""
    stride = pool if stride is None else stride
    n, c, length = x.shape
    if pool > length:
        raise ValueError(f"max_pool1d: pool {pool} exceeds length {length}")
    windows = sliding_window_view(x.data, pool, axis=2)[:, :, ::stride, :]
    arg = windows.argmax(axis=3)
    out = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    l_out = out.shape[2]

    def backward(g):
        dx = np.zeros_like(x.data)
        span = stride * (l_out - 1) + 1
        for j in range(pool):
            dx[:, :, j:j + span:stride] += np.where(arg == j, g, 0.0)
        return (dx,)

    return make_result(out, (x,), backward)


def global_avg_pool1d(x: Tensor) -> Tensor:
    length = x.shape[2]
    out = x.data.mean(axis=2)

    def backward(g):
        return (np.repeat(g[:, :, None] / length, length, axis=2),)

    return make_result(out, (x,), backward)


def batch_norm1d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                 running_var: np.ndarray, training: bool, momentum: float = 0.9,
                 eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over (batch, time).

    In training mode the batch statistics are used and ``running_mean`` /
    ``running_var`` are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    n, c, length = x.shape
    if training:
        m = n * length
        if m < 2:
            raise ValueError("batch_norm1d: training needs at least 2 values per channel")
        mu = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean.copy(), running_var.copy()
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None]) * inv_std[None, :, None]
    out = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def backward(g):
        dgamma = (g * xhat).sum(axis=(0, 2))
        dbeta = g.sum(axis=(0, 2))
        dxhat = g * gamma.data[None, :, None]
        if training:
            s1 = dxhat.sum(axis=(0, 2))[None, :, None]
            s2 = (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
            dx = (dxhat - s1 / m - xhat * s2 / m) * inv_std[None, :, None]
        else:
            dx = dxhat * inv_std[None, :, None]
        return dx, dgamma, dbeta

    return make_result(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return make_result(np.where(mask, x.data, 0.0), (x,), backward)


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    """Branch-stable logistic, clipped so the result stays inside (0, 1)."""
    z = np.asarray(z, dtype=DTYPE)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _SIGMOID_LO, _SIGMOID_HI)


def sigmoid(x: Tensor) -> Tensor:
    s = sigmoid_array(x.data)

    def backward(g):
        return (g * s * (1.0 - s),)

    return make_result(s, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - t * t),)

    return make_result(t, (x,), backward)


def dropout(x: Tensor, rate: float, training: bool,
            rng: np.random.Generator | int | None = None) -> Tensor:
    """Inverted dropout. Identity when ``rate == 0`` or not training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    scale = 1.0 / (1.0 - rate)
    keep = (rng.random(x.shape) >= rate) * scale

    def backward(g):
        return (g * keep,)

    return make_result(x.data * keep, (x,), backward)


def dense(x: Tensor, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.shape[-1] != weights.shape[0]:
        raise ValueError(f"dense: input width {x.shape[-1]} != weight rows {weights.shape[0]}")
    out = x.data @ weights.data
    if bias is not None:
        out = out + bias.data

    def backward(g):
        dx = g @ weights.data.T if x.requires_grad else None
        dw = x.data.T @ g if weights.requires_grad else None
        db = g.sum(axis=0) if bias is not None else None
        return dx, dw, db

    parents = (x, weights) if bias is None else (x, weights, bias)
    return make_result(out, parents, backward)


def flatten(x: Tensor) -> Tensor:
    shape = x.shape

    def backward(g):
        return (g.reshape(shape),)

    return make_result(x.data.reshape(shape[0], -1), (x,), backward)


def residual_add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ValueError(f"residual_add: shape mismatch {x.shape} vs {y.shape}")

    def backward(g):
        return g, g

    return make_result(x.data + y.data, (x, y), backward)


def concat_features(x: Tensor, y: Tensor) -> Tensor:
    if x.data.ndim != 2 or y.data.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"concat_features: incompatible shapes {x.shape} and {y.shape}")
    a = x.shape[1]

    def backward(g):
        return g[:, :a], g[:, a:]

    return make_result(np.concatenate([x.data, y.data], axis=1), (x, y), backward)


def lstm(x: Tensor, w_input: Tensor, w_hidden: Tensor, bias: Tensor) -> Tensor:
    """Single-layer LSTM over the time axis, returning the last hidden state.

    ``x`` is ``(batch, channels, length)`` and each time step's channel vector
    is the cell input. Gate blocks in the ``4H`` axis are ordered
    input, forget, candidate, output. Initial hidden and cell states are zero.
    """
    n, c, length = x.shape
    hidden = w_hidden.shape[0]
    if w_input.shape != (c, 4 * hidden) or w_hidden.shape != (hidden, 4 * hidden):
        raise ValueError("lstm: weight shapes do not match input channels / hidden size")
    xs = x.data
    h = np.zeros((n, hidden), dtype=DTYPE)
    cell = np.zeros((n, hidden), dtype=DTYPE)
    cache = []
    for t in range(length):
        z = xs[:, :, t] @ w_input.data + h @ w_hidden.data + bias.data
        i = sigmoid_array(z[:, :hidden])
        f = sigmoid_array(z[:, hidden:2 * hidden])
        gc = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = sigmoid_array(z[:, 3 * hidden:])
        c_prev, h_prev = cell, h
        cell = f * c_prev + i * gc
        tc = np.tanh(cell)
        h = o * tc
        cache.append((h_prev, c_prev, i, f, gc, o, tc))

    def backward(g):
        dwx = np.zeros_like(w_input.data)
        dwh = np.zeros_like(w_hidden.data)
        db = np.zeros_like(bias.data)
        dx = np.zeros_like(xs)
        dh = g.copy()
        dc = np.zeros((n, hidden), dtype=DTYPE)
        for t in range(length - 1, -1, -1):
            h_prev, c_prev, i, f, gc, o, tc = cache[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * gc
            dgc = dc * i
            df = dc * c_prev
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dgc * (1.0 - gc * gc),
                do * o * (1.0 - o),
            ], axis=1)
            dwx += xs[:, :, t].T @ dz
            dwh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, :, t] = dz @ w_input.data.T
            dh = dz @ w_hidden.data.T
            dc = dc * f
        return dx, dwx, dwh, db

    return make_result(h, (x, w_input, w_hidden, bias), backward)
