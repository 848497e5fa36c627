"""Numba-compiled kernel implementations.

NHWC activations, HWIO weights. The forward microkernel accumulates output
rows vectorized over the contiguous channel axis; strides are specialized
per kernel so the hot loops compile to SIMD. Padding happens outside the
jitted code. Signatures mirror the numpy backend.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(parallel=True, fastmath=True, cache=True)
def _conv_fwd_s1(xp, w, b, y):
    n_im, h_out, w_out, c_out = y.shape
    kh, kw, c_in = w.shape[0], w.shape[1], w.shape[2]
    for nh in prange(n_im * h_out):
        n = nh // h_out
        ho = nh % h_out
        for wo in range(w_out):
            yrow = y[n, ho, wo]
            for co in range(c_out):
                yrow[co] = b[co]
            for i in range(kh):
                for j in range(kw):
                    xrow = xp[n, ho + i, wo + j]
                    for ci in range(c_in):
                        xv = xrow[ci]
                        wrow = w[i, j, ci]
                        for co in range(c_out):
                            yrow[co] += xv * wrow[co]


@njit(parallel=True, fastmath=True, cache=True)
def _conv_fwd_s2(xp, w, b, y):
    n_im, h_out, w_out, c_out = y.shape
    kh, kw, c_in = w.shape[0], w.shape[1], w.shape[2]
    for nh in prange(n_im * h_out):
        n = nh // h_out
        ho = nh % h_out
        for wo in range(w_out):
            yrow = y[n, ho, wo]
            for co in range(c_out):
                yrow[co] = b[co]
            for i in range(kh):
                for j in range(kw):
                    xrow = xp[n, 2 * ho + i, 2 * wo + j]
                    for ci in range(c_in):
                        xv = xrow[ci]
                        wrow = w[i, j, ci]
                        for co in range(c_out):
                            yrow[co] += xv * wrow[co]


@njit(parallel=True, fastmath=True, cache=True)
def _conv_dw_s1(xp, dy, dw):
    n_im, h_out, w_out, c_out = dy.shape
    kh, kw, c_in = dw.shape[0], dw.shape[1], dw.shape[2]
    for ijc in prange(kh * kw * c_in):
        ci = ijc % c_in
        ij = ijc // c_in
        j = ij % kw
        i = ij // kw
        acc = np.zeros(c_out, dtype=dw.dtype)
        for n in range(n_im):
            for ho in range(h_out):
                for wo in range(w_out):
                    xv = xp[n, ho + i, wo + j, ci]
                    dyrow = dy[n, ho, wo]
                    for co in range(c_out):
                        acc[co] += xv * dyrow[co]
        dw[i, j, ci] = acc


@njit(parallel=True, fastmath=True, cache=True)
def _conv_dw_s2(xp, dy, dw):
    n_im, h_out, w_out, c_out = dy.shape
    kh, kw, c_in = dw.shape[0], dw.shape[1], dw.shape[2]
    for ijc in prange(kh * kw * c_in):
        ci = ijc % c_in
        ij = ijc // c_in
        j = ij % kw
        i = ij // kw
        acc = np.zeros(c_out, dtype=dw.dtype)
        for n in range(n_im):
            for ho in range(h_out):
                for wo in range(w_out):
                    xv = xp[n, 2 * ho + i, 2 * wo + j, ci]
                    dyrow = dy[n, ho, wo]
                    for co in range(c_out):
                        acc[co] += xv * dyrow[co]
        dw[i, j, ci] = acc


@njit(parallel=True, fastmath=True, cache=True)
def _conv_dx_s1(w, dy, dxp):
    n_im, h_out, w_out, c_out = dy.shape
    kh, kw, c_in = w.shape[0], w.shape[1], w.shape[2]
    for n in prange(n_im):
        for ho in range(h_out):
            for wo in range(w_out):
                dyrow = dy[n, ho, wo]
                for i in range(kh):
                    for j in range(kw):
                        drow = dxp[n, ho + i, wo + j]
                        for ci in range(c_in):
                            wrow = w[i, j, ci]
                            acc = 0.0
                            for co in range(c_out):
                                acc += wrow[co] * dyrow[co]
                            drow[ci] += acc


@njit(parallel=True, fastmath=True, cache=True)
def _conv_dx_s2(w, dy, dxp):
    n_im, h_out, w_out, c_out = dy.shape
    kh, kw, c_in = w.shape[0], w.shape[1], w.shape[2]
    for n in prange(n_im):
        for ho in range(h_out):
            for wo in range(w_out):
                dyrow = dy[n, ho, wo]
                for i in range(kh):
                    for j in range(kw):
                        drow = dxp[n, 2 * ho + i, 2 * wo + j]
                        for ci in range(c_in):
                            wrow = w[i, j, ci]
                            acc = 0.0
                            for co in range(c_out):
                                acc += wrow[co] * dyrow[co]
                            drow[ci] += acc


@njit(parallel=True, fastmath=True, cache=True)
def _warp(image, matrix, out):
    h, w, c = image.shape
    out_h, out_w, _ = out.shape
    m00, m01, m02 = matrix[0, 0], matrix[0, 1], matrix[0, 2]
    m10, m11, m12 = matrix[1, 0], matrix[1, 1], matrix[1, 2]
    for v in prange(out_h):
        for u in range(out_w):
            sx = m00 * u + m01 * v + m02
            sy = m10 * u + m11 * v + m12
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            fx = sx - x0
            fy = sy - y0
            x0c = min(max(x0, 0), w - 1)
            y0c = min(max(y0, 0), h - 1)
            x1c = min(x0c + 1, w - 1)
            y1c = min(y0c + 1, h - 1)
            for ch in range(c):
                top = image[y0c, x0c, ch] * (1 - fx) + image[y0c, x1c, ch] * fx
                bot = image[y1c, x0c, ch] * (1 - fx) + image[y1c, x1c, ch] * fx
                out[v, u, ch] = top * (1 - fy) + bot * fy


def _pad(x, pad):
    if pad:
        return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    return x


def conv2d_forward(x, w, b, stride, pad):
    xp = _pad(x, pad)
    n = x.shape[0]
    kh, kw, _, c_out = w.shape
    ho = (xp.shape[1] - kh) // stride + 1
    wo = (xp.shape[2] - kw) // stride + 1
    y = np.empty((n, ho, wo, c_out), dtype=x.dtype)
    if stride == 1:
        _conv_fwd_s1(xp, w, b, y)
    elif stride == 2:
        _conv_fwd_s2(xp, w, b, y)
    else:
        raise ValueError(f"unsupported stride {stride}")
    return y


def conv2d_backward(x, w, dy, stride, pad, need_dx=True):
    n, h, wdt, _ = x.shape
    xp = _pad(x, pad)
    dw = np.empty_like(w)
    if stride == 1:
        _conv_dw_s1(xp, dy, dw)
    elif stride == 2:
        _conv_dw_s2(xp, dy, dw)
    else:
        raise ValueError(f"unsupported stride {stride}")
    db = dy.sum(axis=(0, 1, 2))
    dx = None
    if need_dx:
        dxp = np.zeros_like(xp)
        if stride == 1:
            _conv_dx_s1(w, dy, dxp)
        else:
            _conv_dx_s2(w, dy, dxp)
        dx = np.ascontiguousarray(dxp[:, pad : pad + h, pad : pad + wdt, :]) if pad else dxp
    return dx, dw, db


def warp_bilinear(image, matrix, out_h, out_w):
    out = np.empty((out_h, out_w, image.shape[2]), dtype=image.dtype)
    _warp(image, matrix.astype(np.float64), out)
    return out
