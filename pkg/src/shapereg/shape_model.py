"""Point distribution model: alignment, PCA, reconstruction, serialization.

Landmark sets are flattened in interleaved order (x0, y0, x1, y1, ...).
Eigenvectors are stored row-wise and, after scaling, carry a norm of
sqrt(eigenvalue) so that a weight of 1.0 displaces the shape by one standard
deviation along that mode.
"""
from __future__ import annotations

import base64
import enum
import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ContainerFormatError,
    ContainerVersionError,
    CorpusConsistencyError,
    DegenerateAnchorError,
    DimensionError,
    InsufficientDataError,
    InvalidAnchorsError,
)

MODEL_FORMAT = "shapereg-shape-model"
MODEL_FORMAT_VERSION = 1

# Eigenvalues below this fraction of the leading eigenvalue are zero modes.
DEGENERATE_EIGENVALUE_RATIO = 1e-12


class Frame(enum.Enum):
    """Coordinate frame a landmark set lives in."""

    ORIGINAL = "original"
    CROP = "crop"
    CANONICAL = "canonical"


@dataclass(frozen=True)
class LandmarkSet:
    """L two-dimensional points tagged with their coordinate frame."""

    points: np.ndarray
    frame: Frame = Frame.ORIGINAL

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise DimensionError(f"landmark array must be (L, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DimensionError("landmark coordinates must be finite")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    def flattened(self) -> np.ndarray:
        """Interleaved (x0, y0, x1, y1, ...) vector of length 2L."""
        return self.points.reshape(-1)

    def with_points(self, points: np.ndarray, frame: Frame | None = None) -> "LandmarkSet":
        return LandmarkSet(points, self.frame if frame is None else frame)


@dataclass(frozen=True)
class ShapeModel:
    """PCA point-distribution model in the canonical crop frame.

    Attributes:
        num_landmarks: L.
        mean_shape: (2L,) mean landmark vector, pixels.
        eigenvectors: (p_max, 2L) row-wise modes; unit norm before scaling,
            norm sqrt(eigenvalue) after.
        eigenvalues: (p_max,) non-negative, sorted non-increasing, pixels^2.
        eigenvectors_scaled: whether eigenvalue scaling has been applied.
        alignment_meta: descriptor of the alignment method and anchors.
        corpus_meta: free-text provenance.
    """

    num_landmarks: int
    mean_shape: np.ndarray
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors_scaled: bool = True
    alignment_meta: dict = field(default_factory=dict)
    corpus_meta: str = ""

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean_shape, dtype=np.float64)
        vecs = np.ascontiguousarray(self.eigenvectors, dtype=np.float64)
        vals = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        if mean.shape != (2 * self.num_landmarks,):
            raise DimensionError(
                f"mean_shape must have length {2 * self.num_landmarks}, got {mean.shape}"
            )
        if vecs.ndim != 2 or vecs.shape[1] != 2 * self.num_landmarks:
            raise DimensionError(f"eigenvectors must be (p, {2 * self.num_landmarks})")
        if vals.shape != (vecs.shape[0],):
            raise DimensionError("eigenvalues length must match eigenvector count")
        if np.any(vals[:-1] < vals[1:]):
            raise DimensionError("eigenvalues must be sorted non-increasing")
        # Raw (unscaled) models may carry tiny negative eigenvalues from the
        # eigensolver; scaling clamps them. Scaled models must be clean.
        if self.eigenvectors_scaled and np.any(vals < 0):
            raise DimensionError("eigenvalues must be non-negative")
        for arr in (mean, vecs, vals):
            arr.flags.writeable = False
        object.__setattr__(self, "mean_shape", mean)
        object.__setattr__(self, "eigenvectors", vecs)
        object.__setattr__(self, "eigenvalues", vals)

    @property
    def p_max(self) -> int:
        return self.eigenvalues.shape[0]

    def mean_points(self) -> np.ndarray:
        return self.mean_shape.reshape(-1, 2)

    def unit_eigenvectors(self) -> np.ndarray:
        """Rows rescaled back to unit norm; zero modes stay zero."""
        if not self.eigenvectors_scaled:
            return self.eigenvectors.copy()
        scale = np.sqrt(self.eigenvalues)
        out = np.zeros_like(self.eigenvectors)
        nz = scale > 0
        out[nz] = self.eigenvectors[nz] / scale[nz, None]
        return out

    def fingerprint(self) -> str:
        """Content hash of the canonical serialized form."""
        return hashlib.sha256(_serialize_bytes(self)).hexdigest()


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _check_corpus(corpus: list[LandmarkSet]) -> int:
    if not corpus:
        raise InsufficientDataError("corpus is empty")
    num = corpus[0].num_points
    for i, ls in enumerate(corpus):
        if ls.num_points != num:
            raise CorpusConsistencyError(
                f"corpus sample {i} has {ls.num_points} landmarks, expected {num}"
            )
    return num


def _validate_anchors(anchors, num_points: int) -> tuple[np.ndarray, np.ndarray]:
    try:
        group_a, group_b = anchors
    except (TypeError, ValueError):
        raise InvalidAnchorsError("anchors must be a pair of index groups") from None
    a = np.asarray(sorted(group_a), dtype=np.int64)
    b = np.asarray(sorted(group_b), dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise InvalidAnchorsError("anchor groups must be non-empty")
    if set(a.tolist()) & set(b.tolist()):
        raise InvalidAnchorsError("anchor groups must be disjoint")
    for idx in np.concatenate([a, b]):
        if not 0 <= idx < num_points:
            raise InvalidAnchorsError(f"anchor index {idx} outside [0, {num_points})")
    return a, b


def _rotate_about_centroid(points: np.ndarray, angle: float) -> np.ndarray:
    centroid = points.mean(axis=0)
    return (points - centroid) @ _rotation(angle).T + centroid


def align_with_anchors(points: np.ndarray, group_a, group_b) -> np.ndarray:
    """Rotate about the centroid so both anchor centroids share one y value."""
    ca = points[group_a].mean(axis=0)
    cb = points[group_b].mean(axis=0)
    d = cb - ca
    norm = np.hypot(d[0], d[1])
    if norm < 1e-12:
        raise DegenerateAnchorError("anchor centroids coincide; rotation is undefined")
    return _rotate_about_centroid(points, -np.arctan2(d[1], d[0]))


def align_corpus(
    corpus: list[LandmarkSet],
    anchors=None,
    *,
    max_iterations: int = 50,
    tolerance: float = 1e-12,
) -> list[LandmarkSet]:
    """Rotation-normalize a corpus into the canonical frame.

    With ``anchors`` given as a pair of landmark index groups, each shape is
    rotated about its centroid until the two anchor-group centroids are
    horizontal (the face rule: eye-region groups). Without anchors a
    rotation-only Procrustes pass aligns every shape to the evolving mean.
    Either way the output is a pure rotation of the input about its centroid.
    """
    num = _check_corpus(corpus)
    if anchors is not None:
        a, b = _validate_anchors(anchors, num)
        return [
            LandmarkSet(align_with_anchors(ls.points, a, b), Frame.CANONICAL)
            for ls in corpus
        ]

    # Rotation-only Procrustes: gauge fixed by the first shape's orientation.
    shapes = [ls.points.copy() for ls in corpus]
    centered = [p - p.mean(axis=0) for p in shapes]
    reference = centered[0]
    for _ in range(max_iterations):
        total = 0.0
        for i, pts in enumerate(centered):
            num_term = np.sum(pts[:, 0] * reference[:, 1] - pts[:, 1] * reference[:, 0])
            den_term = np.sum(pts[:, 0] * reference[:, 0] + pts[:, 1] * reference[:, 1])
            angle = np.arctan2(num_term, den_term)
            centered[i] = pts @ _rotation(angle).T
            total += abs(angle)
        reference = np.mean(centered, axis=0)
        if total < tolerance:
            break
    aligned = []
    for original, pts in zip(shapes, centered):
        aligned.append(LandmarkSet(pts + original.mean(axis=0), Frame.CANONICAL))
    return aligned


def compute_pca(aligned_corpus: list[LandmarkSet], p_max: int | None = None) -> ShapeModel:
    """Eigendecompose the sample covariance of an aligned corpus.

    Returns a model whose eigenvectors are already eigenvalue-scaled (see
    :func:`apply_eigenvalue_scaling`). ``p_max`` defaults to the largest
    admissible value min(2L, N-1).
    """
    num = _check_corpus(aligned_corpus)
    n = len(aligned_corpus)
    if n < 2:
        raise InsufficientDataError(f"PCA requires at least 2 corpus samples, got {n}")
    for i, ls in enumerate(aligned_corpus):
        if ls.frame is not Frame.CANONICAL:
            raise CorpusConsistencyError(
                f"corpus sample {i} is in frame {ls.frame.value!r}, expected canonical"
            )
    limit = min(2 * num, n - 1)
    if p_max is None:
        p_max = limit
    if not 1 <= p_max <= limit:
        raise InsufficientDataError(
            f"p_max={p_max} exceeds min(2L, N-1) = {limit} for L={num}, N={n}"
        )

    data = np.stack([ls.flattened() for ls in aligned_corpus])
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1][:p_max]
    values = values[order]
    vectors = vectors[:, order].T  # rows

    values = np.maximum(values, 0.0)
    if values[0] > 0:
        values[values < DEGENERATE_EIGENVALUE_RATIO * values[0]] = 0.0

    raw = ShapeModel(
        num_landmarks=num,
        mean_shape=mean,
        eigenvectors=vectors,
        eigenvalues=values,
        eigenvectors_scaled=False,
        alignment_meta={},
        corpus_meta=f"corpus of {n} shapes",
    )
    return apply_eigenvalue_scaling(raw)


def apply_eigenvalue_scaling(model: ShapeModel) -> ShapeModel:
    """Multiply each unit eigenvector by sqrt(eigenvalue).

    Weights then live in standard-deviation units, which keeps the layer
    inputs in a consistent value range. Zero-eigenvalue modes become zero
    vectors; negative eigenvalues are numerical artifacts, clamped to zero
    with a warning.
    """
    if model.eigenvectors_scaled:
        return model
    values = model.eigenvalues.copy()
    if np.any(values < 0):
        warnings.warn(
            "negative eigenvalues clamped to zero during scaling", RuntimeWarning
        )
        values = np.maximum(values, 0.0)
    scaled = model.eigenvectors * np.sqrt(values)[:, None]
    return replace(
        model,
        eigenvectors=scaled,
        eigenvalues=values,
        eigenvectors_scaled=True,
    )


def reconstruct(model: ShapeModel, weights) -> LandmarkSet:
    """Mean shape plus the weighted sum of scaled modes, canonical frame."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] > model.p_max:
        raise DimensionError(
            f"weight vector must be 1-D with length <= {model.p_max}, got {w.shape}"
        )
    flat = model.mean_shape + w @ model.eigenvectors[: w.shape[0]]
    return LandmarkSet(flat.reshape(-1, 2), Frame.CANONICAL)


def project(model: ShapeModel, shape: LandmarkSet) -> np.ndarray:
    """Inverse of :func:`reconstruct`: weights in standard-deviation units.

    Degenerate modes (zero eigenvalue) receive weight 0.
    """
    if shape.num_points != model.num_landmarks:
        raise DimensionError(
            f"shape has {shape.num_points} landmarks, model expects {model.num_landmarks}"
        )
    diff = shape.flattened() - model.mean_shape
    weights = np.zeros(model.p_max)
    nz = model.eigenvalues > 0
    if model.eigenvectors_scaled:
        weights[nz] = (model.eigenvectors[nz] @ diff) / model.eigenvalues[nz]
    else:
        weights[nz] = (model.eigenvectors[nz] @ diff) / np.sqrt(model.eigenvalues[nz])
    return weights


def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype=np.float64)
    return {
        "dtype": "float64",
        "shape": list(data.shape),
        "data_b64": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict, path: str) -> np.ndarray:
    try:
        dtype = obj["dtype"]
        shape = tuple(obj["shape"])
        payload = base64.b64decode(obj["data_b64"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerFormatError(f"malformed array at {path}: {exc}") from exc
    if dtype != "float64":
        raise ContainerFormatError(f"{path}.dtype must be float64, got {dtype!r}")
    arr = np.frombuffer(payload, dtype=np.float64)
    expected = int(np.prod(shape)) if shape else 1
    if arr.size != expected:
        raise ContainerFormatError(
            f"{path}.data_b64 holds {arr.size} values, shape {shape} needs {expected}"
        )
    return arr.reshape(shape)


def _serialize_bytes(model: ShapeModel) -> bytes:
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "num_landmarks": model.num_landmarks,
        "num_modes": model.p_max,
        "eigenvectors_scaled": model.eigenvectors_scaled,
        "alignment_meta": model.alignment_meta,
        "corpus_meta": model.corpus_meta,
        "arrays": {
            "mean_shape": _encode_array(model.mean_shape),
            "eigenvalues": _encode_array(model.eigenvalues),
            "eigenvectors": _encode_array(model.eigenvectors),
        },
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def save_model(model: ShapeModel, path) -> None:
    """Write the value-exact JSON container (float64 payloads as base64)."""
    with open(path, "wb") as fh:
        fh.write(_serialize_bytes(model))


def load_model(path) -> ShapeModel:
    try:
        with open(path, "rb") as fh:
            doc = json.loads(fh.read().decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ContainerFormatError(f"cannot parse shape-model container: {exc}") from exc
    if not isinstance(doc, dict):
        raise ContainerFormatError("container root must be a JSON object")
    if doc.get("format") != MODEL_FORMAT:
        raise ContainerFormatError(
            f"field 'format': expected {MODEL_FORMAT!r}, got {doc.get('format')!r}"
        )
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ContainerVersionError(
            f"unsupported shape-model format_version {version!r}"
        )
    for key in ("num_landmarks", "arrays"):
        if key not in doc:
            raise ContainerFormatError(f"missing field {key!r}")
    arrays = doc["arrays"]
    for key in ("mean_shape", "eigenvalues", "eigenvectors"):
        if key not in arrays:
            raise ContainerFormatError(f"missing field 'arrays.{key}'")
    try:
        model = ShapeModel(
            num_landmarks=int(doc["num_landmarks"]),
            mean_shape=_decode_array(arrays["mean_shape"], "arrays.mean_shape"),
            eigenvectors=_decode_array(arrays["eigenvectors"], "arrays.eigenvectors"),
            eigenvalues=_decode_array(arrays["eigenvalues"], "arrays.eigenvalues"),
            eigenvectors_scaled=bool(doc.get("eigenvectors_scaled", True)),
            alignment_meta=doc.get("alignment_meta", {}),
            corpus_meta=doc.get("corpus_meta", ""),
        )
    except DimensionError as exc:
        raise ContainerFormatError(f"inconsistent container fields: {exc}") from exc
    return model
