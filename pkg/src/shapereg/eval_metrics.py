"""Normalized point-to-point error, dataset evaluation, sweeps, throughput.

The metric: mean per-landmark Euclidean distance, divided by the mean of the
ground-truth landmark bounding-box width and height. It is invariant to
joint scaling and translation of prediction and ground truth, which makes
results comparable across image sizes.
"""
from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .errors import DegenerateExtentError, DimensionError, EmptyDatasetError
from .shape_model import LandmarkSet


def _as_points(obj) -> np.ndarray:
    pts = obj.points if isinstance(obj, LandmarkSet) else np.asarray(obj, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DimensionError(f"expected (L, 2) points, got shape {pts.shape}")
    return pts


def normalized_p2p_error(pred, gt) -> float:
    """Normalized point-to-point error between two landmark sets.

    Accepts LandmarkSets or raw (L, 2) arrays; frames must agree when both
    are LandmarkSets.
    """
    if isinstance(pred, LandmarkSet) and isinstance(gt, LandmarkSet):
        if pred.frame is not gt.frame:
            raise DimensionError(
                f"frames differ: prediction {pred.frame.value}, ground truth {gt.frame.value}"
            )
    p = _as_points(pred)
    g = _as_points(gt)
    if p.shape != g.shape:
        raise DimensionError(f"landmark shapes differ: {p.shape} vs {g.shape}")
    extent = g.max(axis=0) - g.min(axis=0)
    denom = (extent[0] + extent[1]) / 2.0
    if denom <= 0:
        raise DegenerateExtentError("ground-truth landmark extent is zero")
    distances = np.sqrt(((p - g) ** 2).sum(axis=1))
    return float(distances.mean() / denom)


@dataclass
class EvalResult:
    """Per-image errors plus aggregates; aggregates are recomputable."""

    per_image_errors: list[float]
    ids: list[str]
    config_echo: dict = field(default_factory=dict)

    @property
    def num_images(self) -> int:
        return len(self.per_image_errors)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_image_errors))

    @property
    def median(self) -> float:
        return float(np.median(self.per_image_errors))

    @property
    def std(self) -> float:
        return float(np.std(self.per_image_errors))

    def to_json(self) -> str:
        doc = {
            "num_images": self.num_images,
            "mean": self.mean,
            "median": self.median,
            "std": self.std,
            "per_image": [
                {"id": i, "error": e} for i, e in zip(self.ids, self.per_image_errors)
            ],
            "config": self.config_echo,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text: str) -> "EvalResult":
        doc = json.loads(text)
        return EvalResult(
            per_image_errors=[r["error"] for r in doc["per_image"]],
            ids=[r["id"] for r in doc["per_image"]],
            config_echo=doc.get("config", {}),
        )

    def histogram_csv(self, bins: int = 20) -> str:
        counts, edges = np.histogram(self.per_image_errors, bins=bins)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, count in enumerate(counts):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(count)])
        return buf.getvalue()


def evaluate(checkpoint, dataset, model, batch_size: int = 64) -> EvalResult:
    """Score a checkpoint on every dataset sample, in manifest order."""
    from .train_engine import Predictor  # deferred to avoid an import cycle

    if len(dataset) == 0:
        raise EmptyDatasetError("evaluation dataset is empty")
    predictor = Predictor(checkpoint, model)
    errors = []
    for start in range(0, len(dataset), batch_size):
        chunk = dataset.samples[start : start + batch_size]
        images = np.stack([s.image for s in chunk])
        coords = predictor.predict_coords(images)
        for sample, pred in zip(chunk, coords):
            errors.append(normalized_p2p_error(pred, sample.landmarks.points))
    return EvalResult(
        per_image_errors=errors,
        ids=list(dataset.ids),
        config_echo={
            "checkpoint": checkpoint.meta.get("train_config", {}),
            "num_images": len(dataset),
            "out_size": dataset.out_size,
        },
    )


@dataclass
class SweepRow:
    num_params: int
    mean_error: float | None
    median_error: float | None
    status: str  # "ok" or "failed: <reason>"


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["num_params", "mean_error", "median_error", "status"])
        for row in self.rows:
            writer.writerow(
                [
                    row.num_params,
                    "" if row.mean_error is None else repr(float(row.mean_error)),
                    "" if row.median_error is None else repr(float(row.median_error)),
                    row.status,
                ]
            )
        return buf.getvalue()


def parameter_sweep(
    dataset_train,
    dataset_test,
    p_values: list[int],
    config,
    model,
    net_config=None,
    log=None,
) -> SweepResult:
    """Train one model per parameter count (shared seed) and evaluate each.

    Training failures mark their row as failed and the sweep continues.
    """
    from .train_engine import train  # deferred to avoid an import cycle

    if max(p_values) > model.p_max:
        raise DimensionError(
            f"sweep p={max(p_values)} exceeds the model's p_max={model.p_max}"
        )
    rows = []
    for p in p_values:
        cfg = replace(config, num_shape_params=int(p))
        ncfg = None
        if net_config is not None:
            ncfg = replace(net_config, num_shape_params=int(p))
        try:
            outcome = train(dataset_train, cfg, model, net_config=ncfg)
            result = evaluate(outcome.checkpoint, dataset_test, model)
            rows.append(SweepRow(int(p), result.mean, result.median, "ok"))
        except Exception as exc:  # keep sweeping past a failed cell
            rows.append(SweepRow(int(p), None, None, f"failed: {exc}"))
        if log is not None:
            log(rows[-1])
    return SweepResult(rows)


@dataclass
class BenchmarkResult:
    fps: float
    latency_ms: float
    batch_size: int
    iterations: int
    backend: str
    hardware: str

    def to_dict(self) -> dict:
        return {
            "fps": self.fps,
            "latency_ms": self.latency_ms,
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "backend": self.backend,
            "hardware": self.hardware,
        }


def hardware_descriptor() -> str:
    import multiprocessing

    return (
        f"{platform.machine()} {platform.processor() or 'cpu'} "
        f"({multiprocessing.cpu_count()} cores), python {platform.python_version()}"
    )


def benchmark_fps(
    checkpoint,
    model,
    batch_size: int = 1,
    iterations: int = 50,
    warmup: int = 5,
    seed: int = 0,
) -> BenchmarkResult:
    """Median wall-clock throughput of the full forward pass.

    Covers the feature network plus the PCA layer on random input images;
    warm-up iterations are excluded.
    """
    from .train_engine import Predictor  # deferred to avoid an import cycle

    predictor = Predictor(checkpoint, model)
    size = predictor.network.config.input_size
    channels = predictor.network.config.in_channels
    rng = np.random.default_rng(seed)
    images = rng.random((batch_size, size, size, channels), dtype=np.float32)

    for _ in range(warmup):
        predictor.predict_coords(images)
    times = []
    for _ in range(iterations):
        start = time.perf_counter()
        predictor.predict_coords(images)
        times.append(time.perf_counter() - start)
    latency = float(np.median(times))
    return BenchmarkResult(
        fps=batch_size / latency,
        latency_ms=latency * 1e3,
        batch_size=batch_size,
        iterations=iterations,
        backend=backend.active_backend(),
        hardware=hardware_descriptor(),
    )
