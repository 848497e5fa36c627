"""Pure-numpy kernel implementations.

Convolutions use im2col plus one large BLAS matmul. Activations are NHWC
and weights are HWIO (kh, kw, C_in, C_out): patches flatten in (i, j, c)
order, which matches the flattened weight layout, keeps the im2col copy
cache-friendly, and feeds BLAS directly.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _pad(x, pad):
    if pad:
        return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    return x


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Patches of padded NHWC input as an (N*Ho*Wo, kh*kw*C) matrix."""
    n, h, w, c = xp.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    sn, sh, sw, sc = xp.strides
    view = as_strided(
        xp,
        shape=(n, ho, wo, kh, kw, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
    )
    return np.ascontiguousarray(view).reshape(n * ho * wo, kh * kw * c)


def conv2d_forward(x, w, b, stride, pad):
    n = x.shape[0]
    kh, kw, _, c_out = w.shape
    xp = _pad(x, pad)
    ho = (xp.shape[1] - kh) // stride + 1
    wo = (xp.shape[2] - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride)
    y = cols @ w.reshape(-1, c_out)
    y += b
    return y.reshape(n, ho, wo, c_out)


def conv2d_backward(x, w, dy, stride, pad, need_dx=True):
    n, h, wdt, c_in = x.shape
    kh, kw, _, c_out = w.shape
    _, ho, wo, _ = dy.shape
    xp = _pad(x, pad)
    cols = _im2col(xp, kh, kw, stride)
    dy_mat = dy.reshape(-1, c_out)

    dw = (cols.T @ dy_mat).reshape(w.shape)
    db = dy_mat.sum(axis=0)

    dx = None
    if need_dx:
        dcols = dy_mat @ w.reshape(-1, c_out).T
        dcols = dcols.reshape(n, ho, wo, kh, kw, c_in)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += dcols[
                    :, :, :, i, j, :
                ]
        dx = dxp[:, pad : pad + h, pad : pad + wdt, :] if pad else dxp
    return dx, dw, db


def warp_bilinear(image, matrix, out_h, out_w):
    """Inverse-warp an (H,W,C) image; matrix maps output indices to source indices."""
    h, w, _ = image.shape
    u = np.arange(out_w, dtype=np.float64)
    v = np.arange(out_h, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    sx = matrix[0, 0] * uu + matrix[0, 1] * vv + matrix[0, 2]
    sy = matrix[1, 0] * uu + matrix[1, 1] * vv + matrix[1, 2]

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = (sx - x0)[..., None].astype(image.dtype)
    fy = (sy - y0)[..., None].astype(image.dtype)
    x0 = np.clip(x0.astype(np.int64), 0, w - 1)
    y0 = np.clip(y0.astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    p00 = image[y0, x0]
    p01 = image[y0, x1]
    p10 = image[y1, x0]
    p11 = image[y1, x1]
    top = p00 * (1 - fx) + p01 * fx
    bot = p10 * (1 - fx) + p11 * fx
    return top * (1 - fy) + bot * fy
