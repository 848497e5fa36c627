"""Annotation parsing, cropping, augmentation, and dataset assembly.

Coordinate conventions: landmark coordinates are continuous pixel positions
in the image domain [0, W] x [0, H]; array index (r, c) corresponds to the
pixel centered at (c + 0.5, r + 0.5). Crop mappings are exact affine maps on
coordinates, and images are resampled through the same map so landmarks and
pixels stay consistent.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .errors import (
    DegenerateExtentError,
    DimensionError,
    ManifestError,
    ParseError,
    SampleRejectedError,
)
from .shape_model import Frame, LandmarkSet


# ---------------------------------------------------------------------------
# Annotation parsers


def parse_pts(text: str) -> LandmarkSet:
    """Parse the iBUG .pts grammar: version, n_points, '{', points, '}'."""
    lines = text.splitlines()
    idx = 0

    def next_line(expect: str) -> tuple[int, str]:
        nonlocal idx
        while idx < len(lines) and not lines[idx].strip():
            idx += 1
        if idx >= len(lines):
            raise ParseError(f"line {len(lines) + 1}: unexpected end of file, expected {expect}")
        idx += 1
        return idx, lines[idx - 1].strip()

    lineno, line = next_line("'version:' header")
    if not line.replace(" ", "").lower().startswith("version:"):
        raise ParseError(f"line {lineno}: expected 'version:' header, got {line!r}")

    lineno, line = next_line("'n_points:' header")
    compact = line.replace(" ", "").lower()
    if not compact.startswith("n_points:"):
        raise ParseError(f"line {lineno}: expected 'n_points:' header, got {line!r}")
    try:
        count = int(compact.split(":", 1)[1])
    except ValueError:
        raise ParseError(f"line {lineno}: n_points is not an integer: {line!r}") from None
    if count < 1:
        raise ParseError(f"line {lineno}: n_points must be positive, got {count}")

    lineno, line = next_line("'{'")
    if line != "{":
        raise ParseError(f"line {lineno}: expected '{{', got {line!r}")

    points = []
    for _ in range(count):
        lineno, line = next_line("a coordinate pair")
        if line == "}":
            raise ParseError(
                f"line {lineno}: found '}}' after {len(points)} points, expected {count}"
            )
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 'x y', got {line!r}")
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric coordinate in {line!r}") from None

    lineno, line = next_line("'}'")
    if line != "}":
        raise ParseError(f"line {lineno}: expected '}}' after {count} points, got {line!r}")
    return LandmarkSet(np.array(points), Frame.ORIGINAL)


def parse_cat(text: str) -> LandmarkSet:
    """Parse the cat-annotation format: leading count, then x y pairs."""
    tokens = text.split()
    if not tokens:
        raise ParseError("empty annotation")
    try:
        count = int(tokens[0])
    except ValueError:
        raise ParseError(f"leading token {tokens[0]!r} is not a point count") from None
    if count < 1:
        raise ParseError(f"point count must be positive, got {count}")
    if len(tokens) - 1 != 2 * count:
        raise ParseError(
            f"expected {2 * count} coordinates for {count} points, got {len(tokens) - 1}"
        )
    try:
        values = [float(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ParseError(f"non-numeric coordinate: {exc}") from None
    return LandmarkSet(np.array(values).reshape(-1, 2), Frame.ORIGINAL)


@dataclass(frozen=True)
class CsvSchema:
    """Column naming for the generic landmark CSV."""

    id_column: str = "id"
    x_prefix: str = "x"
    y_prefix: str = "y"


def parse_csv_landmarks(text: str, schema: CsvSchema | None = None) -> list[tuple[str, LandmarkSet]]:
    """Parse the generic CSV: header ``id,x0,y0,x1,y1,...``, one record per row."""
    schema = schema or CsvSchema()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("CSV has no header row") from None
    header = [h.strip() for h in header]
    if not header or header[0] != schema.id_column:
        raise ParseError(f"first CSV column must be {schema.id_column!r}, got {header[:1]}")
    coord_cols = header[1:]
    if not coord_cols or len(coord_cols) % 2 != 0:
        raise ParseError("CSV must have an even, positive number of coordinate columns")
    num_points = len(coord_cols) // 2
    for i in range(num_points):
        expected = (f"{schema.x_prefix}{i}", f"{schema.y_prefix}{i}")
        got = (coord_cols[2 * i], coord_cols[2 * i + 1])
        if got != expected:
            raise ParseError(f"coordinate columns {got} do not match expected {expected}")

    records = []
    for rownum, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"row {rownum}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            values = [float(v) for v in row[1:]]
        except ValueError:
            raise ParseError(f"row {rownum}: non-numeric coordinate") from None
        records.append((row[0], LandmarkSet(np.array(values).reshape(-1, 2), Frame.ORIGINAL)))
    return records


def format_csv_landmarks(records, schema: CsvSchema | None = None) -> str:
    """Inverse of :func:`parse_csv_landmarks`."""
    schema = schema or CsvSchema()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if records:
        num_points = records[0][1].num_points
        header = [schema.id_column]
        for i in range(num_points):
            header += [f"{schema.x_prefix}{i}", f"{schema.y_prefix}{i}"]
        writer.writerow(header)
        for source_id, landmarks in records:
            writer.writerow([source_id] + [repr(float(v)) for v in landmarks.flattened()])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Cropping


@dataclass(frozen=True)
class CropRecord:
    """Invertible mapping between original-image and crop coordinates."""

    source_id: str
    crop_box: tuple[float, float, float, float]  # x0, y0, width, height
    out_size: tuple[int, int]
    scale_x: float
    scale_y: float

    def to_crop(self, points: np.ndarray) -> np.ndarray:
        x0, y0, _, _ = self.crop_box
        return (np.asarray(points, dtype=np.float64) - (x0, y0)) * (self.scale_x, self.scale_y)

    def to_original(self, points: np.ndarray) -> np.ndarray:
        x0, y0, _, _ = self.crop_box
        return np.asarray(points, dtype=np.float64) / (self.scale_x, self.scale_y) + (x0, y0)


@dataclass(frozen=True)
class Sample:
    """Network-ready crop: image in [0,1], landmarks in the crop frame."""

    image: np.ndarray  # (out, out, C) float32
    landmarks: LandmarkSet  # Frame.CROP
    crop: CropRecord


def landmark_bbox(points: np.ndarray) -> tuple[float, float, float, float]:
    mins = points.min(axis=0)
    maxs = points.max(axis=0)
    return mins[0], mins[1], maxs[0] - mins[0], maxs[1] - mins[1]


def compute_crop_box(
    landmarks: LandmarkSet,
    image_size: tuple[int, int],
    margin: float = 0.2,
) -> tuple[float, float, float, float]:
    """Landmark bbox expanded by margin per side, clipped to the image."""
    width, height = image_size
    bx, by, bw, bh = landmark_bbox(landmarks.points)
    if bw <= 0 or bh <= 0:
        raise DegenerateExtentError(
            f"landmark bounding box is degenerate (w={bw}, h={bh})"
        )
    x0 = max(bx - margin * bw, 0.0)
    y0 = max(by - margin * bh, 0.0)
    x1 = min(bx + bw + margin * bw, float(width))
    y1 = min(by + bh + margin * bh, float(height))
    return x0, y0, x1 - x0, y1 - y0


def crop_and_resize(
    image: np.ndarray,
    landmarks: LandmarkSet,
    margin: float = 0.2,
    out_size: int = 224,
    source_id: str = "",
) -> Sample:
    """Produce the canonical out_size x out_size crop around the landmarks."""
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[:, :, None]
    h, w = image.shape[:2]
    x0, y0, cw, ch = compute_crop_box(landmarks, (w, h), margin)
    record = CropRecord(
        source_id=source_id,
        crop_box=(x0, y0, cw, ch),
        out_size=(out_size, out_size),
        scale_x=out_size / cw,
        scale_y=out_size / ch,
    )
    # Output pixel center (u+.5, v+.5) pulls from source coordinate
    # (u+.5)/scale + origin; subtract .5 to express it as an array index.
    matrix = np.array(
        [
            [1.0 / record.scale_x, 0.0, (0.5 / record.scale_x) + x0 - 0.5],
            [0.0, 1.0 / record.scale_y, (0.5 / record.scale_y) + y0 - 0.5],
        ]
    )
    warped = kernels.warp_bilinear(image.astype(np.float32), matrix, out_size, out_size)
    return Sample(
        image=warped,
        landmarks=LandmarkSet(record.to_crop(landmarks.points), Frame.CROP),
        crop=record,
    )


def landmarks_to_original(crop: CropRecord, landmarks: LandmarkSet) -> LandmarkSet:
    """Map crop-frame landmarks back to source-image coordinates."""
    return LandmarkSet(crop.to_original(landmarks.points), Frame.ORIGINAL)


# ---------------------------------------------------------------------------
# Augmentation


@dataclass(frozen=True)
class AugmentConfig:
    """Similarity jitter applied identically to image and landmarks.

    Ranges are conservative defaults; rotation is the one the training
    recipe relies on, scale/translation jitter are optional extras.
    """

    rotation_max_deg: float = 30.0
    scale_jitter: float = 0.10
    translation_jitter: float = 0.05  # fraction of the crop size
    reject_tolerance: float = 0.0  # pixels outside the crop before rejection

    def is_identity(self) -> bool:
        return (
            self.rotation_max_deg == 0
            and self.scale_jitter == 0
            and self.translation_jitter == 0
        )


def augment(sample: Sample, config: AugmentConfig, rng_seed) -> Sample:
    """Randomly rotate/scale/translate a sample about the crop center.

    Landmarks are transformed analytically; the image is inverse-warped with
    bilinear sampling. Deterministic for a fixed seed. Raises
    SampleRejectedError when any landmark leaves the crop by more than the
    configured tolerance; the caller is expected to resample.
    """
    rng = np.random.default_rng(rng_seed)
    theta = rng.uniform(-1.0, 1.0) * np.deg2rad(config.rotation_max_deg)
    scale = 1.0 + rng.uniform(-1.0, 1.0) * config.scale_jitter
    out_w, out_h = sample.crop.out_size
    shift = rng.uniform(-1.0, 1.0, size=2) * config.translation_jitter * np.array([out_w, out_h])
    if config.is_identity():
        return sample

    c = np.array([out_w / 2.0, out_h / 2.0])
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rot = np.array([[cos_t, -sin_t], [sin_t, cos_t]])

    new_points = (sample.landmarks.points - c) @ (scale * rot).T + c + shift
    lo = new_points.min(axis=0)
    hi = new_points.max(axis=0)
    tol = config.reject_tolerance
    if lo[0] < -tol or lo[1] < -tol or hi[0] > out_w + tol or hi[1] > out_h + tol:
        raise SampleRejectedError(
            "augmentation pushed landmarks outside the crop "
            f"(range x [{lo[0]:.1f}, {hi[0]:.1f}], y [{lo[1]:.1f}, {hi[1]:.1f}])"
        )

    # Inverse map: source = R^T ((q - c - shift)) / scale + c, in index space.
    inv_rot = rot.T / scale
    offset = c - inv_rot @ (c + shift)
    matrix = np.array(
        [
            [inv_rot[0, 0], inv_rot[0, 1], inv_rot[0, 0] * 0.5 + inv_rot[0, 1] * 0.5 + offset[0] - 0.5],
            [inv_rot[1, 0], inv_rot[1, 1], inv_rot[1, 0] * 0.5 + inv_rot[1, 1] * 0.5 + offset[1] - 0.5],
        ]
    )
    warped = kernels.warp_bilinear(sample.image, matrix, out_h, out_w)
    return Sample(
        image=warped,
        landmarks=LandmarkSet(new_points, Frame.CROP),
        crop=sample.crop,
    )


# ---------------------------------------------------------------------------
# Images, manifests, datasets


def load_image(path) -> np.ndarray:
    """Decode PNG/JPEG into (H, W, C) float32 in [0, 1]; grayscale keeps C=1."""
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(img, dtype=np.float32) / 65535.0
            return arr[:, :, None]
        if img.mode in ("L", "P", "1"):
            arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
            return arr[:, :, None]
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        return arr


def image_size(path) -> tuple[int, int]:
    """(width, height) from the header without decoding pixels."""
    with Image.open(path) as img:
        return img.size


@dataclass(frozen=True)
class ManifestEntry:
    image: Path
    annotation: Path
    split: str


def load_manifest(path) -> list[ManifestEntry]:
    """Read the dataset manifest CSV: header image,annotation,split."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ManifestError(f"manifest {path} is empty") from None
    if header != ["image", "annotation", "split"]:
        raise ManifestError(
            f"manifest header must be image,annotation,split, got {header}"
        )
    entries = []
    base = path.parent
    for rownum, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ManifestError(f"manifest row {rownum}: expected 3 fields, got {len(row)}")
        image, annotation, split = (v.strip() for v in row)
        if split not in ("train", "test"):
            raise ManifestError(
                f"manifest row {rownum}: split must be 'train' or 'test', got {split!r}"
            )
        entries.append(ManifestEntry(base / image, base / annotation, split))
    return entries


def parse_annotation_file(path) -> LandmarkSet:
    """Dispatch on extension: .pts, .cat, or single-record .csv."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read annotation {path}: {exc}") from exc
    suffix = path.suffix.lower()
    try:
        if suffix == ".pts":
            return parse_pts(text)
        if suffix == ".cat":
            return parse_cat(text)
        if suffix == ".csv":
            records = parse_csv_landmarks(text)
            if len(records) != 1:
                raise ParseError(
                    f"expected exactly one record in per-image CSV, got {len(records)}"
                )
            return records[0][1]
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
    raise ParseError(f"{path}: unsupported annotation extension {suffix!r}")


@dataclass
class Dataset:
    """Materialized samples in manifest order."""

    samples: list[Sample]
    ids: list[str]
    out_size: int
    margin: float

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_landmarks(self) -> int:
        return self.samples[0].landmarks.num_points if self.samples else 0

    @property
    def in_channels(self) -> int:
        return self.samples[0].image.shape[2] if self.samples else 0

    def images(self) -> np.ndarray:
        return np.stack([s.image for s in self.samples])

    def landmark_array(self) -> np.ndarray:
        return np.stack([s.landmarks.points for s in self.samples])

    def subset(self, indices) -> "Dataset":
        return Dataset(
            samples=[self.samples[i] for i in indices],
            ids=[self.ids[i] for i in indices],
            out_size=self.out_size,
            margin=self.margin,
        )


def _check_landmark_count(ids, landmark_sets):
    counts = {ls.num_points for ls in landmark_sets}
    if len(counts) > 1:
        detail = ", ".join(
            f"{i}:{ls.num_points}" for i, ls in zip(ids[:5], landmark_sets[:5])
        )
        raise ManifestError(
            f"inconsistent landmark counts across the manifest ({detail}, ...)"
            if len(ids) > 5
            else f"inconsistent landmark counts across the manifest ({detail})"
        )


def load_dataset(
    manifest_path,
    split: str,
    out_size: int = 224,
    margin: float = 0.2,
) -> Dataset:
    """Load, crop, and resize every manifest entry of the given split."""
    entries = [e for e in load_manifest(manifest_path) if e.split == split]
    samples, ids, landmark_sets = [], [], []
    for entry in entries:
        landmarks = parse_annotation_file(entry.annotation)
        image = load_image(entry.image)
        source_id = entry.image.stem
        samples.append(
            crop_and_resize(image, landmarks, margin=margin, out_size=out_size, source_id=source_id)
        )
        ids.append(source_id)
        landmark_sets.append(landmarks)
    _check_landmark_count(ids, landmark_sets)
    return Dataset(samples=samples, ids=ids, out_size=out_size, margin=margin)


def load_landmark_corpus(
    manifest_path,
    split: str = "train",
    out_size: int = 224,
    margin: float = 0.2,
) -> list[LandmarkSet]:
    """Crop-frame landmark sets only; images are probed for size, not decoded."""
    entries = [e for e in load_manifest(manifest_path) if e.split == split]
    corpus, ids = [], []
    for entry in entries:
        landmarks = parse_annotation_file(entry.annotation)
        w, h = image_size(entry.image)
        x0, y0, cw, ch = compute_crop_box(landmarks, (w, h), margin)
        record = CropRecord(
            source_id=entry.image.stem,
            crop_box=(x0, y0, cw, ch),
            out_size=(out_size, out_size),
            scale_x=out_size / cw,
            scale_y=out_size / ch,
        )
        corpus.append(LandmarkSet(record.to_crop(landmarks.points), Frame.CROP))
        ids.append(entry.image.stem)
    _check_landmark_count(ids, corpus)
    return corpus
