import os
import subprocess
import sys

import numpy as np
import numpy.testing as npt
import pytest

from shapereg import backend, kernels


def conv_case(rng, n=2, h=12, w=13, c_in=3, c_out=5, kernel=(3, 3), dtype=np.float64):
    x = rng.random((n, h, w, c_in)).astype(dtype)
    kh, kw = kernel
    weights = rng.normal(size=(kh, kw, c_in, c_out)).astype(dtype)
    bias = rng.normal(size=c_out).astype(dtype)
    return x, weights, bias


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
@pytest.mark.parametrize("kernel", [(3, 3), (1, 1), (3, 1), (1, 3)])
def test_backends_agree_on_forward(stride, pad, kernel):
    if kernel == (1, 1) and stride == 2:
        pytest.skip("stride-2 1x1 not used by any layer")
    rng = np.random.default_rng(0)
    x, w, b = conv_case(rng, kernel=kernel)
    results = {}
    for name in backend.available_backends():
        backend.set_backend(name)
        try:
            results[name] = kernels.conv2d_forward(x, w, b, stride, pad)
        finally:
            backend.set_backend(None)
    if len(results) < 2:
        pytest.skip("numba not available")
    npt.assert_allclose(results["numba"], results["numpy"], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("stride,pad", [(1, 0), (2, 1)])
def test_backends_agree_on_backward(stride, pad):
    rng = np.random.default_rng(1)
    x, w, b = conv_case(rng)
    backend.set_backend("numpy")
    try:
        y = kernels.conv2d_forward(x, w, b, stride, pad)
    finally:
        backend.set_backend(None)
    dy = rng.normal(size=y.shape)
    grads = {}
    for name in backend.available_backends():
        backend.set_backend(name)
        try:
            grads[name] = kernels.conv2d_backward(x, w, dy, stride, pad)
        finally:
            backend.set_backend(None)
    if len(grads) < 2:
        pytest.skip("numba not available")
    for a, b_ in zip(grads["numba"], grads["numpy"]):
        npt.assert_allclose(a, b_, rtol=1e-10, atol=1e-10)


def test_numpy_conv_matches_direct_definition():
    rng = np.random.default_rng(2)
    x, w, b = conv_case(rng, n=1, h=7, w=8, c_in=2, c_out=3)
    backend.set_backend("numpy")
    try:
        y = kernels.conv2d_forward(x, w, b, 1, 0)
    finally:
        backend.set_backend(None)
    n, ho, wo, co = y.shape
    for i in range(ho):
        for j in range(wo):
            for c in range(co):
                patch = x[0, i : i + 3, j : j + 3, :]
                expected = np.sum(patch * w[:, :, :, c]) + b[c]
                assert abs(y[0, i, j, c] - expected) < 1e-12


def test_warp_agrees_across_backends():
    rng = np.random.default_rng(3)
    image = rng.random((20, 24, 1)).astype(np.float32)
    matrix = np.array([[0.8, 0.1, 2.0], [-0.05, 1.1, -1.0]])
    outs = {}
    for name in backend.available_backends():
        backend.set_backend(name)
        try:
            outs[name] = kernels.warp_bilinear(image, matrix, 16, 18)
        finally:
            backend.set_backend(None)
    if len(outs) < 2:
        pytest.skip("numba not available")
    npt.assert_allclose(outs["numba"], outs["numpy"], atol=1e-5)


def test_env_flag_selects_backend():
    code = (
        "import shapereg.backend as b; print(b.active_backend())"
    )
    env = dict(os.environ, SHAPEREG_BACKEND="numpy")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.stdout.strip() == "numpy"


def test_set_backend_validation():
    with pytest.raises(ValueError):
        backend.set_backend("tensorflow")
    backend.set_backend("numpy")
    try:
        assert backend.active_backend() == "numpy"
    finally:
        backend.set_backend(None)
