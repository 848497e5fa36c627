"""Dispatch layer for the hot numeric kernels.

Every function looks up the active backend at call time, so
:func:`shapereg.backend.set_backend` takes effect immediately. Signatures:

* ``conv2d_forward(x, w, b, stride, pad) -> y`` with NHWC ``x``,
  HWIO ``w`` shaped (kh, kw, C_in, C_out), bias ``b`` shaped (C_out,).
* ``conv2d_backward(x, w, dy, stride, pad, need_dx=True) -> (dx, dw, db)``.
* ``warp_bilinear(image, matrix, out_h, out_w) -> out`` for an (H,W,C)
  image; ``matrix`` is a 2x3 affine mapping output array indices to source
  array indices, sampled bilinearly with border clamping.
"""
from __future__ import annotations

import importlib

from .. import backend as _backend

_MODULES: dict[str, object] = {}


def _impl():
    name = _backend.active_backend()
    mod = _MODULES.get(name)
    if mod is None:
        mod = importlib.import_module(f".{'_' + name}", __package__)
        _MODULES[name] = mod
    return mod


def conv2d_forward(x, w, b, stride, pad):
    return _impl().conv2d_forward(x, w, b, stride, pad)


def conv2d_backward(x, w, dy, stride, pad, need_dx=True):
    return _impl().conv2d_backward(x, w, dy, stride, pad, need_dx)


def warp_bilinear(image, matrix, out_h, out_w):
    return _impl().warp_bilinear(image, matrix, out_h, out_w)
