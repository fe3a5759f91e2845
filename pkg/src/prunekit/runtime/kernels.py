"""Layer forward/backward kernels on (N, C, H, W) numpy arrays.

Convolutions go through one big im2col GEMM; depthwise and pooling use a
k*k loop of vectorized slice ops, which keeps memory flat and avoids
numpy's slow scatter-add. Each forward returns (output, cache) and each
backward consumes that cache. All kernels are pure.
"""

from __future__ import annotations

import numpy as np


def _col_view(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Read-only sliding-window view (N, C, k, k, OH, OW) of a padded input."""
    n, c, hp, wp = xp.shape
    oh = (hp - k) // stride + 1
    ow = (wp - k) // stride + 1
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, (n, c, k, k, oh, ow), (sn, sc, sh, sw, sh * stride, sw * stride), writeable=False
    )


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, weight, bias, stride: int, padding: int, groups: int):
    n, c, _, _ = x.shape
    f, cg, k, _ = weight.shape
    xp = _pad(x, padding)
    if groups == 1:
        view = _col_view(xp, k, stride)
        oh, ow = view.shape[4], view.shape[5]
        cols = np.ascontiguousarray(view.transpose(0, 4, 5, 1, 2, 3)).reshape(n * oh * ow, c * k * k)
        out = cols @ weight.reshape(f, -1).T
        out = out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)
        cache = ("gemm", cols, x.shape, xp.shape, weight.shape, stride, padding)
    elif groups == c and cg == 1:
        view = _col_view(xp, k, stride)
        oh, ow = view.shape[4], view.shape[5]
        out = np.zeros((n, f, oh, ow), dtype=x.dtype)
        w = weight[:, 0]
        for i in range(k):
            for j in range(k):
                out += view[:, :, i, j] * w[None, :, i, j, None, None]
        cache = ("depthwise", xp, weight.shape, stride, padding, x.shape)
    else:
        # general grouped conv: per-group GEMMs
        cpg, fpg = c // groups, f // groups
        outs, caches = [], []
        for g in range(groups):
            xg = x[:, g * cpg:(g + 1) * cpg]
            wg = weight[g * fpg:(g + 1) * fpg]
            og, cg_ = conv2d_forward(xg, wg, None, stride, padding, 1)
            outs.append(og)
            caches.append(cg_)
        out = np.concatenate(outs, axis=1)
        cache = ("grouped", caches, groups, x.shape, weight.shape)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out), cache


def conv2d_backward(dout, weight, cache):
    kind = cache[0]
    if kind == "gemm":
        _, cols, x_shape, xp_shape, w_shape, stride, padding = cache
        n, c, h, w_dim = x_shape
        f, _, k, _ = w_shape
        oh, ow = dout.shape[2], dout.shape[3]
        dout2d = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(n * oh * ow, f)
        dw = (dout2d.T @ cols).reshape(w_shape)
        dcols = (dout2d @ weight.reshape(f, -1)).reshape(n, oh, ow, c, k, k)
        dcols = dcols.transpose(0, 3, 4, 5, 1, 2)  # (N, C, k, k, OH, OW)
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, i, j]
        dx = dxp[:, :, padding:padding + h, padding:padding + w_dim] if padding else dxp
        db = dout.sum(axis=(0, 2, 3))
        return np.ascontiguousarray(dx), dw, db
    if kind == "depthwise":
        _, xp, w_shape, stride, padding, x_shape = cache
        f, _, k, _ = w_shape
        oh, ow = dout.shape[2], dout.shape[3]
        view = _col_view(xp, k, stride)
        dw = np.zeros(w_shape, dtype=dout.dtype)
        dxp = np.zeros(xp.shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dw[:, 0, i, j] = np.einsum("nchw,nchw->c", view[:, :, i, j], dout)
                dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += (
                    dout * weight[None, :, 0, i, j, None, None]
                )
        h, w_dim = x_shape[2], x_shape[3]
        dx = dxp[:, :, padding:padding + h, padding:padding + w_dim] if padding else dxp
        db = dout.sum(axis=(0, 2, 3))
        return np.ascontiguousarray(dx), dw, db
    # grouped
    _, caches, groups, x_shape, w_shape = cache
    c, f = x_shape[1], w_shape[0]
    cpg, fpg = c // groups, f // groups
    dxs, dws = [], []
    for g in range(groups):
        dg = dout[:, g * fpg:(g + 1) * fpg]
        wg = weight[g * fpg:(g + 1) * fpg]
        dx_g, dw_g, _ = conv2d_backward(dg, wg, caches[g])
        dxs.append(dx_g)
        dws.append(dw_g)
    return np.concatenate(dxs, axis=1), np.concatenate(dws, axis=0), dout.sum(axis=(0, 2, 3))


def batchnorm_forward(x, gamma, beta, running_mean, running_var, eps, momentum, mode: str):
    """Train mode normalizes by biased batch statistics and returns updated
    running stats (unbiased variance, framework convention); eval mode uses
    the running statistics and returns them unchanged."""
    if mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = x.shape[0] * x.shape[2] * x.shape[3]
        unbiased = var * m / max(m - 1, 1)
        new_mean = (1 - momentum) * running_mean + momentum * mean
        new_var = (1 - momentum) * running_var + momentum * unbiased
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv_std, gamma, mode)
    return out, cache, (new_mean.astype(x.dtype), new_var.astype(x.dtype))


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, mode = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if mode == "train":
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        sum_dxhat = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        dx = (inv_std[None, :, None, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    else:
        dx = dxhat * inv_std[None, :, None, None]
    return dx, dgamma, dbeta


def maxpool_forward(x, k: int, stride: int):
    view = _col_view(x, k, stride)
    n, c, _, _, oh, ow = view.shape
    flat = view.reshape(n, c, k * k, oh, ow)
    idx = flat.argmax(axis=2)  # first max wins ties, deterministic
    out = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]
    return np.ascontiguousarray(out), (idx, x.shape, k, stride)


def maxpool_backward(dout, cache):
    idx, x_shape, k, stride = cache
    oh, ow = dout.shape[2], dout.shape[3]
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for p in range(k * k):
        i, j = divmod(p, k)
        dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dout * (idx == p)
    return dx


def global_avgpool_forward(x):
    return x.mean(axis=(2, 3), keepdims=True), x.shape


def global_avgpool_backward(dout, x_shape):
    scale = 1.0 / (x_shape[2] * x_shape[3])
    return np.broadcast_to(dout * scale, x_shape).astype(dout.dtype, copy=True)


def linear_forward(x, weight, bias):
    return x @ weight.T + bias, x


def linear_backward(dout, weight, x):
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


def softmax_cross_entropy(logits, labels):
    """Mean softmax cross-entropy and d(loss)/d(logits)."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n
