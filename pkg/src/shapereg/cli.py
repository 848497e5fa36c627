"""Command-line entry point wiring all modules into reproducible runs.

Subcommands: synth, build-shapes, train, evaluate, predict, sweep,
benchmark. Flag values take precedence over --config file entries, which
take precedence over built-in defaults; every run writes its resolved
configuration snapshot into the output location before doing any work.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime/training
error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import backend
from .data_pipeline import AugmentConfig, load_dataset, load_landmark_corpus
from .errors import DataError, ShapeRegError, UsageError
from .eval_metrics import benchmark_fps, evaluate, parameter_sweep
from .feature_net import NetConfig, default_config_for_input
from .shape_model import align_corpus, compute_pca, load_model, save_model
from .synth_data import SynthSpec, generate_dataset
from .train_engine import Checkpoint, TrainConfig, train


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code contract."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class RunContext:
    """Resolved configuration (flags > config file > defaults) for one run."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_config = {}
        if getattr(args, "config", None):
            path = Path(args.config)
            try:
                self.file_config = json.loads(path.read_text())
            except OSError as exc:
                raise DataError(f"cannot read config file {path}: {exc}") from exc
            except ValueError as exc:
                raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
            if not isinstance(self.file_config, dict):
                raise DataError(f"config file {path} must hold a JSON object")
        self.resolved: dict = {}

    def get(self, key: str, default=None):
        value = getattr(self.args, key.replace("-", "_"), None)
        if value is None:
            value = self.file_config.get(key, default)
        self.resolved[key] = value
        return value

    def write_snapshot(self, destination: Path, subcommand: str) -> None:
        doc = {"subcommand": subcommand, "resolved_config": _jsonable(self.resolved)}
        _atomic_write_text(destination, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise UsageError(f"{flag} expects a comma-separated integer list, got {text!r}") from None


def _parse_float_pair(text: str, flag: str) -> tuple[float, float]:
    parts = str(text).split(",")
    if len(parts) != 2:
        raise UsageError(f"{flag} expects 'low,high', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise UsageError(f"{flag} expects numbers, got {text!r}") from None


def _parse_anchor_groups(text: str):
    """Parse '36-41,42-47' or '0 1 2;5 6 7' style anchor group pairs."""
    text = text.strip()
    groups = text.split(";") if ";" in text else text.split(",")
    if len(groups) != 2:
        raise UsageError(
            f"--anchors expects two groups like '36-41,42-47', got {text!r}"
        )
    parsed = []
    for group in groups:
        indices: list[int] = []
        for token in group.replace(",", " ").split():
            if "-" in token:
                lo, _, hi = token.partition("-")
                try:
                    indices.extend(range(int(lo), int(hi) + 1))
                except ValueError:
                    raise UsageError(f"bad anchor range {token!r}") from None
            else:
                try:
                    indices.append(int(token))
                except ValueError:
                    raise UsageError(f"bad anchor index {token!r}") from None
        parsed.append(indices)
    return parsed[0], parsed[1]


def _net_config_from(ctx: RunContext, num_params: int, in_channels: int,
                     input_size: int) -> NetConfig:
    plan = ctx.get("channel-plan")
    freqs = ctx.get("frequencies")
    separable = bool(ctx.get("separable", False))
    dtype = ctx.get("net-dtype", "float32")
    if plan is None:
        return default_config_for_input(
            input_size, num_params, in_channels=in_channels,
            separable_convs=separable, dtype=dtype,
        )
    plan = _parse_int_list(plan, "--channel-plan") if isinstance(plan, str) else [int(c) for c in plan]
    if freqs is None:
        raise UsageError("--frequencies is required when --channel-plan is given")
    freqs = _parse_int_list(freqs, "--frequencies") if isinstance(freqs, str) else [int(f) for f in freqs]
    return NetConfig(
        num_shape_params=num_params,
        in_channels=in_channels,
        separable_convs=separable,
        channel_plan=tuple(plan),
        block_frequencies=tuple(freqs),
        input_size=input_size,
        dtype=dtype,
    )


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(ctx: RunContext) -> int:
    out = Path(ctx.get("out"))
    amplitudes = ctx.get("amplitudes")
    if isinstance(amplitudes, str):
        amplitudes = tuple(float(v) for v in amplitudes.split(","))
    elif amplitudes is not None:
        amplitudes = tuple(float(v) for v in amplitudes)
    spec = SynthSpec(
        num_samples=int(ctx.get("num-samples", 2000)),
        num_landmarks=int(ctx.get("num-landmarks", 12)),
        num_modes=int(ctx.get("num-modes", 4)),
        mode_amplitudes=amplitudes,
        noise_sigma=float(ctx.get("noise-sigma", 0.0)),
        canvas_size=int(ctx.get("canvas-size", 256)),
        base_radius=float(ctx.get("base-radius", 72.0)),
        scale_range=_parse_float_pair(ctx.get("scale-range", "0.9,1.1"), "--scale-range"),
        rotation_max_deg=float(ctx.get("rotation-max", 25.0)),
        translation_max=float(ctx.get("translation-max", 16.0)),
        train_fraction=float(ctx.get("train-fraction", 0.9)),
        seed=int(ctx.get("seed", 0)),
    )
    workers = int(ctx.get("workers", 1))
    ctx.resolved["spec"] = _jsonable(spec.__dict__)
    ctx.write_snapshot(out / "run_config.json", "synth")
    result = generate_dataset(spec, out_dir=out, workers=workers)
    print(f"wrote {spec.num_samples} samples to {out} (manifest: {result.manifest_path})")
    return 0


def cmd_build_shapes(ctx: RunContext) -> int:
    manifest = ctx.get("manifest")
    if manifest is None:
        raise UsageError("--manifest is required")
    out = Path(ctx.get("out", "shape_model.json"))
    split = ctx.get("split", "train")
    out_size = int(ctx.get("out-size", 224))
    margin = float(ctx.get("margin", 0.2))
    p_max = ctx.get("num-params")
    anchors_text = ctx.get("anchors")
    ctx.write_snapshot(out.with_suffix(out.suffix + ".run.json"), "build-shapes")

    corpus = load_landmark_corpus(manifest, split=split, out_size=out_size, margin=margin)
    anchors = _parse_anchor_groups(anchors_text) if anchors_text else None
    aligned = align_corpus(corpus, anchors)
    model = compute_pca(aligned, None if p_max is None else int(p_max))
    alignment_meta = (
        {"method": "anchors", "groups": [list(map(int, g)) for g in anchors]}
        if anchors
        else {"method": "procrustes"}
    )
    from dataclasses import replace

    model = replace(
        model,
        alignment_meta=alignment_meta,
        corpus_meta=f"{len(corpus)} shapes from {Path(manifest).name} [{split}], "
        f"crop {out_size}px margin {margin}",
    )
    save_model(model, out)
    print(
        f"shape model: L={model.num_landmarks} p_max={model.p_max} -> {out} "
        f"(fingerprint {model.fingerprint()[:12]})"
    )
    return 0


def _load_train_pieces(ctx: RunContext):
    manifest = ctx.get("manifest")
    model_path = ctx.get("shape-model")
    if manifest is None or model_path is None:
        raise UsageError("--manifest and --shape-model are required")
    input_size = int(ctx.get("input-size", 224))
    margin = float(ctx.get("margin", 0.2))
    model = load_model(model_path)
    dataset = load_dataset(manifest, "train", out_size=input_size, margin=margin)
    return model, dataset, input_size


def _train_config_from(ctx: RunContext, num_params: int) -> TrainConfig:
    augment_cfg = None
    if ctx.get("augment", False):
        augment_cfg = AugmentConfig(
            rotation_max_deg=float(ctx.get("augment-rotation", 30.0)),
            scale_jitter=float(ctx.get("augment-scale", 0.10)),
            translation_jitter=float(ctx.get("augment-translation", 0.05)),
        )
    early = ctx.get("early-stop-error")
    return TrainConfig(
        num_shape_params=num_params,
        epochs=int(ctx.get("epochs", 150)),
        batch_size=int(ctx.get("batch-size", 32)),
        learning_rate=float(ctx.get("learning-rate", 1e-3)),
        loss_kind=str(ctx.get("loss", "l1")),
        seed=int(ctx.get("seed", 0)),
        val_fraction=float(ctx.get("val-fraction", 0.1)),
        augment=augment_cfg,
        early_stop_error=None if early is None else float(early),
    )


def cmd_train(ctx: RunContext) -> int:
    out = Path(ctx.get("out"))
    num_params = ctx.get("num-params")
    if num_params is None:
        raise UsageError("--num-params is required")
    num_params = int(num_params)
    model, dataset, input_size = _load_train_pieces(ctx)
    config = _train_config_from(ctx, num_params)
    net_config = _net_config_from(ctx, num_params, dataset.in_channels, input_size)
    ctx.resolved["net_config"] = net_config.to_dict()
    ctx.resolved["train_config"] = config.to_dict()
    ctx.write_snapshot(out / "run_config.json", "train")

    result = train(dataset, config, model, net_config=net_config, log_path=out / "train_log.jsonl")
    checkpoint_path = out / "checkpoint.npz"
    tmp = checkpoint_path.with_name(checkpoint_path.name + ".tmp")
    result.checkpoint.save(tmp)
    os.replace(tmp, checkpoint_path)
    summary = {
        "best_epoch": result.best_epoch,
        "best_val_error": result.best_val_error,
        "epochs_run": len(result.history),
    }
    _atomic_write_text(out / "train_summary.json", json.dumps(summary, indent=2) + "\n")
    print(
        f"trained {len(result.history)} epochs; best val error "
        f"{result.best_val_error:.4f} at epoch {result.best_epoch} -> {checkpoint_path}"
    )
    return 0


def _load_eval_pieces(ctx: RunContext):
    manifest = ctx.get("manifest")
    model_path = ctx.get("shape-model")
    ckpt_path = ctx.get("checkpoint")
    if manifest is None or model_path is None or ckpt_path is None:
        raise UsageError("--manifest, --shape-model, and --checkpoint are required")
    model = load_model(model_path)
    checkpoint = Checkpoint.load(ckpt_path)
    split = ctx.get("split", "test")
    input_size = checkpoint.net_config.input_size
    margin = float(ctx.get("margin", 0.2))
    dataset = load_dataset(manifest, split, out_size=input_size, margin=margin)
    return model, checkpoint, dataset


def cmd_evaluate(ctx: RunContext) -> int:
    out = Path(ctx.get("out"))
    model, checkpoint, dataset = _load_eval_pieces(ctx)
    ctx.write_snapshot(out / "run_config.json", "evaluate")
    result = evaluate(checkpoint, dataset, model)
    _atomic_write_text(out / "eval.json", result.to_json())
    _atomic_write_text(out / "error_histogram.csv", result.histogram_csv())
    if ctx.get("plot", False):
        _maybe_plot_histogram(result, out / "error_histogram.png")
    print(
        f"evaluated {result.num_images} images: mean {result.mean:.4f}, "
        f"median {result.median:.4f}, std {result.std:.4f}"
    )
    return 0


def cmd_predict(ctx: RunContext) -> int:
    from .data_pipeline import landmarks_to_original
    from .train_engine import Predictor

    out = Path(ctx.get("out"))
    model, checkpoint, dataset = _load_eval_pieces(ctx)
    ctx.write_snapshot(out / "run_config.json", "predict")
    predictor = Predictor(checkpoint, model)
    p = checkpoint.net_config.num_shape_params

    rows = []
    header = ["id"]
    num = model.num_landmarks
    header += [f"crop_x{i},crop_y{i}" for i in range(num)]
    header += [f"orig_x{i},orig_y{i}" for i in range(num)]
    header += ["s,theta,tx,ty"]
    rows.append(",".join(header))
    for start in range(0, len(dataset), 64):
        chunk = dataset.samples[start : start + 64]
        ids = dataset.ids[start : start + 64]
        images = np.stack([s.image for s in chunk])
        raw = predictor.predict_raw(images)
        coords = predictor.predict_coords(images)
        for sample, sid, crop_pts, params in zip(chunk, ids, coords, raw):
            from .shape_model import Frame, LandmarkSet

            orig = landmarks_to_original(sample.crop, LandmarkSet(crop_pts, Frame.CROP))
            cells = [sid]
            cells += [f"{v!r}" for v in crop_pts.reshape(-1)]
            cells += [f"{v!r}" for v in orig.points.reshape(-1)]
            cells += [f"{v!r}" for v in params[p:]]
            rows.append(",".join(cells))
    _atomic_write_text(out / "predictions.csv", "\n".join(rows) + "\n")
    print(f"wrote predictions for {len(dataset)} images -> {out / 'predictions.csv'}")
    return 0


def cmd_sweep(ctx: RunContext) -> int:
    out = Path(ctx.get("out"))
    params_text = ctx.get("params")
    if params_text is None:
        raise UsageError("--params is required (e.g. --params 5,15,25)")
    p_values = (
        _parse_int_list(params_text, "--params")
        if isinstance(params_text, str)
        else [int(p) for p in params_text]
    )
    manifest = ctx.get("manifest")
    model_path = ctx.get("shape-model")
    if manifest is None or model_path is None:
        raise UsageError("--manifest and --shape-model are required")
    input_size = int(ctx.get("input-size", 224))
    margin = float(ctx.get("margin", 0.2))
    model = load_model(model_path)
    dataset_train = load_dataset(manifest, "train", out_size=input_size, margin=margin)
    dataset_test = load_dataset(manifest, "test", out_size=input_size, margin=margin)
    config = _train_config_from(ctx, p_values[0])
    net_config = _net_config_from(ctx, p_values[0], dataset_train.in_channels, input_size)
    ctx.resolved["train_config"] = config.to_dict()
    ctx.resolved["net_config"] = net_config.to_dict()
    ctx.write_snapshot(out / "run_config.json", "sweep")

    result = parameter_sweep(
        dataset_train,
        dataset_test,
        p_values,
        config,
        model,
        net_config=net_config,
        log=lambda row: print(
            f"p={row.num_params}: "
            + (f"mean {row.mean_error:.4f} median {row.median_error:.4f}" if row.mean_error is not None else row.status)
        ),
    )
    _atomic_write_text(out / "sweep.csv", result.to_csv())
    if ctx.get("plot", False):
        _maybe_plot_sweep(result, out / "sweep.png")
    print(f"sweep over p={p_values} -> {out / 'sweep.csv'}")
    return 0


def cmd_benchmark(ctx: RunContext) -> int:
    out = Path(ctx.get("out"))
    model_path = ctx.get("shape-model")
    ckpt_path = ctx.get("checkpoint")
    if model_path is None or ckpt_path is None:
        raise UsageError("--shape-model and --checkpoint are required")
    model = load_model(model_path)
    checkpoint = Checkpoint.load(ckpt_path)
    batch_size = int(ctx.get("batch-size", 1))
    iterations = int(ctx.get("iterations", 50))
    compare = bool(ctx.get("compare-backends", False))
    ctx.write_snapshot(out / "run_config.json", "benchmark")

    backends = list(backend.available_backends()) if compare else [backend.active_backend()]
    reports = []
    previous = None
    try:
        for name in backends:
            backend.set_backend(name)
            result = benchmark_fps(checkpoint, model, batch_size=batch_size, iterations=iterations)
            reports.append(result.to_dict())
            print(
                f"backend={name}: {result.fps:.1f} fps, {result.latency_ms:.2f} ms/batch "
                f"(batch {batch_size}, median of {iterations})"
            )
    finally:
        backend.set_backend(previous)
    _atomic_write_text(out / "benchmark.json", json.dumps(reports, indent=2, sort_keys=True) + "\n")
    return 0


def _maybe_plot_histogram(result, path: Path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot", file=sys.stderr)
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(result.per_image_errors, bins=20)
    ax.set_xlabel("normalized point-to-point error")
    ax.set_ylabel("images")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _maybe_plot_sweep(result, path: Path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot", file=sys.stderr)
        return
    ok = [r for r in result.rows if r.mean_error is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r.num_params for r in ok], [r.mean_error for r in ok], marker="o")
    ax.set_xlabel("number of shape parameters")
    ax.set_ylabel("mean normalized error")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Parser assembly


def _add_common(parser: _Parser, *, out_required: bool = True):
    parser.add_argument("--config", help="JSON config file; flags override its entries")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--out", required=out_required, help="output directory for run artifacts")


def build_parser() -> _Parser:
    parser = _Parser(prog="shapereg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    p = sub.add_parser("synth", help="generate a synthetic landmark dataset")
    _add_common(p)
    p.add_argument("--num-samples", type=int, help="number of samples (default 2000)")
    p.add_argument("--num-landmarks", type=int, help="landmarks per shape (default 12)")
    p.add_argument("--num-modes", type=int, help="true deformation modes (default 4)")
    p.add_argument("--amplitudes", help="comma-separated mode amplitudes in pixels")
    p.add_argument("--noise-sigma", type=float, help="landmark jitter sigma in pixels (default 0)")
    p.add_argument("--canvas-size", type=int, help="square canvas size in pixels (default 256)")
    p.add_argument("--base-radius", type=float, help="base polygon radius in pixels (default 72)")
    p.add_argument("--scale-range", help="similarity scale range 'low,high' (default 0.9,1.1)")
    p.add_argument("--rotation-max", type=float, help="max |rotation| in degrees (default 25)")
    p.add_argument("--translation-max", type=float, help="max |translation| in pixels (default 16)")
    p.add_argument("--train-fraction", type=float, help="fraction tagged train (default 0.9)")
    p.add_argument("--workers", type=int, help="parallel generator processes (default 1)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-shapes", help="align a corpus and fit the PCA shape model")
    _add_common(p, out_required=False)
    p.add_argument("--manifest", help="dataset manifest CSV")
    p.add_argument("--num-params", type=int, help="modes to keep (default min(2L, N-1))")
    p.add_argument("--anchors", help="two anchor index groups, e.g. '36-41,42-47'; omit for rotation-only Procrustes")
    p.add_argument("--split", help="manifest split to use (default train)")
    p.add_argument("--out-size", type=int, help="crop size in pixels (default 224)")
    p.add_argument("--margin", type=float, help="crop margin fraction (default 0.2)")
    p.set_defaults(func=cmd_build_shapes, out="shape_model.json")

    p = sub.add_parser("train", help="train the network end-to-end")
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest CSV")
    p.add_argument("--shape-model", help="shape-model container path")
    p.add_argument("--num-params", type=int, help="shape parameters p regressed by the network")
    p.add_argument("--epochs", type=int, help="training epochs (default 150)")
    p.add_argument("--batch-size", type=int, help="batch size (default 32)")
    p.add_argument("--learning-rate", type=float, help="ADAM learning rate (default 1e-3)")
    p.add_argument("--loss", choices=["l1", "mse"], help="point-distance loss (default l1)")
    p.add_argument("--input-size", type=int, help="network input size (default 224)")
    p.add_argument("--margin", type=float, help="crop margin fraction (default 0.2)")
    p.add_argument("--channel-plan", help="comma-separated per-stage output channels")
    p.add_argument("--frequencies", help="comma-separated per-stage block frequencies")
    p.add_argument("--separable", action="store_const", const=True, help="use 3x1/1x3 separable C2DB convolutions")
    p.add_argument("--net-dtype", choices=["float32", "float64"], help="network dtype (default float32)")
    p.add_argument("--val-fraction", type=float, help="validation fraction carved from train (default 0.1)")
    p.add_argument("--early-stop-error", type=float, help="stop when validation error drops below this")
    p.add_argument("--augment", action="store_const", const=True, help="enable rotation/scale/translation augmentation")
    p.add_argument("--augment-rotation", type=float, help="augmentation max |rotation| degrees (default 30)")
    p.add_argument("--augment-scale", type=float, help="augmentation scale jitter fraction (default 0.1)")
    p.add_argument("--augment-translation", type=float, help="augmentation translation jitter fraction (default 0.05)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest split")
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest CSV")
    p.add_argument("--shape-model", help="shape-model container path")
    p.add_argument("--checkpoint", help="checkpoint path")
    p.add_argument("--split", help="manifest split to evaluate (default test)")
    p.add_argument("--margin", type=float, help="crop margin fraction (default 0.2)")
    p.add_argument("--plot", action="store_const", const=True, help="also render the error histogram (needs matplotlib)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="run inference and export landmark coordinates")
    _add_common(p)
    p.add_argument("--manifest", help="dataset manifest CSV")
    p.add_argument("--shape-model", help="shape-model container path")
    p.add_argument("--checkpoint", help="checkpoint path")
    p.add_argument("--split", help="manifest split to predict on (default test)")
    p.add_argument("--margin", type=float, help="crop margin fraction (default 0.2)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="train and evaluate across shape-parameter counts")
    _add_common(p)
    p.add_argument("--params", help="comma-separated parameter counts, e.g. 5,15,25")
    p.add_argument("--manifest", help="dataset manifest CSV")
    p.add_argument("--shape-model", help="shape-model container path")
    p.add_argument("--input-size", type=int, help="network input size (default 224)")
    p.add_argument("--margin", type=float, help="crop margin fraction (default 0.2)")
    p.add_argument("--epochs", type=int, help="training epochs per cell (default 150)")
    p.add_argument("--batch-size", type=int, help="batch size (default 32)")
    p.add_argument("--learning-rate", type=float, help="ADAM learning rate (default 1e-3)")
    p.add_argument("--loss", choices=["l1", "mse"], help="point-distance loss (default l1)")
    p.add_argument("--channel-plan", help="comma-separated per-stage output channels")
    p.add_argument("--frequencies", help="comma-separated per-stage block frequencies")
    p.add_argument("--separable", action="store_const", const=True, help="use separable C2DB convolutions")
    p.add_argument("--net-dtype", choices=["float32", "float64"], help="network dtype (default float32)")
    p.add_argument("--val-fraction", type=float, help="validation fraction (default 0.1)")
    p.add_argument("--early-stop-error", type=float, help="stop when validation error drops below this")
    p.add_argument("--augment", action="store_const", const=True, help="enable augmentation")
    p.add_argument("--augment-rotation", type=float, help="augmentation max |rotation| degrees (default 30)")
    p.add_argument("--augment-scale", type=float, help="augmentation scale jitter fraction (default 0.1)")
    p.add_argument("--augment-translation", type=float, help="augmentation translation jitter fraction (default 0.05)")
    p.add_argument("--plot", action="store_const", const=True, help="also render the sweep curve (needs matplotlib)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("benchmark", help="measure forward-pass throughput")
    _add_common(p)
    p.add_argument("--shape-model", help="shape-model container path")
    p.add_argument("--checkpoint", help="checkpoint path")
    p.add_argument("--batch-size", type=int, help="benchmark batch size (default 1)")
    p.add_argument("--iterations", type=int, help="timed iterations (default 50)")
    p.add_argument("--compare-backends", action="store_const", const=True,
                   help="run once per available backend (numba and numpy)")
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help()
            return 1
        ctx = RunContext(args)
        ctx.get("seed", 0)
        return args.func(ctx)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return exc.exit_code
    except DataError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return exc.exit_code
    except ShapeRegError as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return exc.exit_code


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
