"""Differentiable layer mapping shape weights + global transform to landmarks.

Forward: a local shape is formed as mean + sum(w_i * v_i_scaled), converted
to homogeneous coordinates and pushed through the similarity transform
``M = [[s cos t, -s sin t, tx], [s sin t, s cos t, ty]]``. The mean enters
with a fixed weight of 1 and no gradient ever flows to the stored
eigenvectors, eigenvalues, or mean: they are constants of the layer.

Backward is analytic. With local points X_l and output gradient G_l:

* d/dw_i   = sum_l G_l . (s R v_{i,l})
* d/ds     = sum_l G_l . (R X_l)
* d/dtheta = sum_l G_l . (s R' X_l)
* d/dtx    = sum_l G_l,x      d/dty = sum_l G_l,y

All layer math runs in float64; batches are processed sample by sample so a
batched call is bit-identical to concatenated single calls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .shape_model import Frame, LandmarkSet, ShapeModel


@dataclass(frozen=True)
class GlobalTransform:
    """Similarity transform: scale, rotation (radians), translation (pixels)."""

    s: float = 1.0
    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        for name in ("s", "theta", "tx", "ty"):
            if not np.isfinite(getattr(self, name)):
                raise DimensionError(f"transform parameter {name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.theta, self.tx, self.ty])

    @staticmethod
    def identity() -> "GlobalTransform":
        return GlobalTransform(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ParamVector:
    """Layer input: p shape weights plus the 4 global transform parameters."""

    weights: np.ndarray
    transform: GlobalTransform

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise DimensionError(f"weights must be 1-D, got shape {w.shape}")
        object.__setattr__(self, "weights", w)

    def packed(self) -> np.ndarray:
        """Concatenated (p+4,) vector: weights then (s, theta, tx, ty)."""
        return np.concatenate([self.weights, self.transform.as_array()])

    @staticmethod
    def from_packed(vec: np.ndarray, num_weights: int) -> "ParamVector":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (num_weights + 4,):
            raise DimensionError(
                f"packed vector must have length {num_weights + 4}, got {vec.shape}"
            )
        s, theta, tx, ty = vec[num_weights:]
        return ParamVector(vec[:num_weights], GlobalTransform(s, theta, tx, ty))


def build_transform_matrix(transform: GlobalTransform) -> np.ndarray:
    """2x3 homogeneous similarity matrix; applied as p' = M @ [x, y, 1]^T."""
    c = np.cos(transform.theta)
    s = np.sin(transform.theta)
    return np.array(
        [
            [transform.s * c, -transform.s * s, transform.tx],
            [transform.s * s, transform.s * c, transform.ty],
        ]
    )


def apply_transform_matrix(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    return points @ matrix[:, :2].T + matrix[:, 2]


@dataclass
class LayerGradients:
    """Per-sample parameter gradients from :func:`layer_backward_coords`."""

    weights: np.ndarray  # (N, p)
    s: np.ndarray  # (N,)
    theta: np.ndarray
    tx: np.ndarray
    ty: np.ndarray

    def packed(self) -> np.ndarray:
        """(N, p+4) gradient matching the packed parameter layout."""
        tail = np.stack([self.s, self.theta, self.tx, self.ty], axis=1)
        return np.concatenate([self.weights, tail], axis=1)


def _check_batch(model: ShapeModel, weights: np.ndarray, tparams: np.ndarray):
    if weights.ndim != 2:
        raise DimensionError(f"weights batch must be (N, p), got {weights.shape}")
    if weights.shape[1] > model.p_max:
        raise DimensionError(
            f"p={weights.shape[1]} exceeds the model's p_max={model.p_max}"
        )
    if tparams.shape != (weights.shape[0], 4):
        raise DimensionError(
            f"transform batch must be (N, 4), got {tparams.shape}"
        )


def layer_forward_coords(
    model: ShapeModel, weights: np.ndarray, tparams: np.ndarray
) -> np.ndarray:
    """Batched forward pass on raw arrays.

    Args:
        model: the frozen shape model (eigenvalue-scaled).
        weights: (N, p) shape weights, p <= p_max.
        tparams: (N, 4) rows of (s, theta, tx, ty).

    Returns:
        (N, L, 2) landmark coordinates in the crop frame.
    """
    weights = np.asarray(weights, dtype=np.float64)
    tparams = np.asarray(tparams, dtype=np.float64)
    _check_batch(model, weights, tparams)
    n, p = weights.shape
    basis = model.eigenvectors[:p]
    out = np.empty((n, model.num_landmarks, 2))
    for i in range(n):
        local = (model.mean_shape + weights[i] @ basis).reshape(-1, 2)
        s, theta, tx, ty = tparams[i]
        c, sn = np.cos(theta), np.sin(theta)
        x, y = local[:, 0], local[:, 1]
        out[i, :, 0] = s * (c * x - sn * y) + tx
        out[i, :, 1] = s * (sn * x + c * y) + ty
    return out


def layer_backward_coords(
    model: ShapeModel,
    weights: np.ndarray,
    tparams: np.ndarray,
    grad_landmarks: np.ndarray,
) -> LayerGradients:
    """Analytic gradients of the forward pass w.r.t. every input parameter."""
    weights = np.asarray(weights, dtype=np.float64)
    tparams = np.asarray(tparams, dtype=np.float64)
    grad = np.asarray(grad_landmarks, dtype=np.float64)
    _check_batch(model, weights, tparams)
    n, p = weights.shape
    if grad.shape != (n, model.num_landmarks, 2):
        raise DimensionError(
            f"grad_landmarks must be (N, L, 2) = ({n}, {model.num_landmarks}, 2), "
            f"got {grad.shape}"
        )

    basis = model.eigenvectors[:p]  # (p, 2L)
    d_w = np.empty((n, p))
    d_s = np.empty(n)
    d_theta = np.empty(n)
    d_tx = np.empty(n)
    d_ty = np.empty(n)
    for i in range(n):
        local = (model.mean_shape + weights[i] @ basis).reshape(-1, 2)
        s, theta = tparams[i, 0], tparams[i, 1]
        c, sn = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -sn], [sn, c]])
        rot_prime = np.array([[-sn, -c], [c, -sn]])
        g = grad[i]

        # d/dw_i = sum_l (g_l^T (s R) v_{i,l})  ==  basis . flatten(g @ (sR))
        d_w[i] = basis @ (g @ (s * rot)).reshape(-1)
        d_s[i] = np.sum((g @ rot) * local)
        d_theta[i] = s * np.sum((g @ rot_prime) * local)
        d_tx[i] = np.sum(g[:, 0])
        d_ty[i] = np.sum(g[:, 1])
    return LayerGradients(d_w, d_s, d_theta, d_tx, d_ty)


def _as_batch(params) -> tuple[list[ParamVector], bool]:
    if isinstance(params, ParamVector):
        return [params], True
    return list(params), False


def layer_forward(model: ShapeModel, params) -> LandmarkSet | list[LandmarkSet]:
    """Spec-level forward: ParamVector(s) in, crop-frame LandmarkSet(s) out."""
    batch, single = _as_batch(params)
    if not batch:
        return []
    p = batch[0].weights.shape[0]
    for pv in batch:
        if pv.weights.shape[0] != p:
            raise DimensionError("all ParamVectors in a batch must share p")
    weights = np.stack([pv.weights for pv in batch])
    tparams = np.stack([pv.transform.as_array() for pv in batch])
    coords = layer_forward_coords(model, weights, tparams)
    sets = [LandmarkSet(coords[i], Frame.CROP) for i in range(len(batch))]
    return sets[0] if single else sets


def layer_backward(model: ShapeModel, params, grad_landmarks) -> LayerGradients:
    """Spec-level backward for ParamVector(s) against landmark gradients."""
    batch, single = _as_batch(params)
    weights = np.stack([pv.weights for pv in batch])
    tparams = np.stack([pv.transform.as_array() for pv in batch])
    grad = np.asarray(grad_landmarks, dtype=np.float64)
    if single and grad.ndim == 2:
        grad = grad[None]
    return layer_backward_coords(model, weights, tparams, grad)
