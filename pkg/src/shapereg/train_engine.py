"""End-to-end optimization of the feature network through the PCA layer.

The loop is deliberately explicit: forward the network to parameter rows,
map them through the analytic PCA layer, compute the point-distance loss in
crop-frame pixels, chain the layer's analytic backward into the network
backward, and apply ADAM. The shape model is a constant throughout; its
tensors are read-only arrays and a content fingerprint travels with every
checkpoint.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data_pipeline import AugmentConfig, Dataset, augment
from .errors import (
    DimensionError,
    ModelMismatchError,
    ContainerFormatError,
    ContainerVersionError,
    SampleRejectedError,
    TrainingDivergedError,
)
from .eval_metrics import normalized_p2p_error
from .feature_net import (
    FeatureNet,
    NetConfig,
    build_network,
    center_head_on_model,
    check_images,
    default_config_for_input,
)
from .pca_layer import (
    GlobalTransform,
    ParamVector,
    layer_backward_coords,
    layer_forward_coords,
)
from .shape_model import Frame, LandmarkSet, ShapeModel

CHECKPOINT_FORMAT = "shapereg-checkpoint"
CHECKPOINT_FORMAT_VERSION = 1

LOSS_KINDS = ("l1", "mse")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; ADAM with a constant learning rate."""

    num_shape_params: int
    epochs: int = 150
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss_kind: str = "l1"
    seed: int = 0
    checkpoint_every: int = 0  # 0 keeps only the best-by-validation weights
    val_fraction: float = 0.1
    augment: AugmentConfig | None = None
    early_stop_error: float | None = None  # stop once val error drops below

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise DimensionError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise DimensionError("learning_rate must be positive")
        if self.loss_kind not in LOSS_KINDS:
            raise DimensionError(f"loss_kind must be one of {LOSS_KINDS}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["augment"] = None if self.augment is None else asdict(self.augment)
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if doc.get("augment") is not None:
            doc["augment"] = AugmentConfig(**doc["augment"])
        return TrainConfig(**doc)


def point_loss(pred, gt, kind: str = "l1") -> float:
    """Mean point-distance loss over batch, landmarks, and both coordinates."""
    p = _loss_array(pred)
    g = _loss_array(gt)
    if p.shape != g.shape:
        raise DimensionError(f"prediction shape {p.shape} != ground truth {g.shape}")
    delta = p - g
    if kind == "l1":
        return float(np.mean(np.abs(delta)))
    if kind == "mse":
        return float(np.mean(delta**2))
    raise DimensionError(f"loss_kind must be one of {LOSS_KINDS}")


def point_loss_grad(pred: np.ndarray, gt: np.ndarray, kind: str) -> np.ndarray:
    delta = pred - gt
    if kind == "l1":
        return np.sign(delta) / delta.size
    return 2.0 * delta / delta.size


def _loss_array(obj) -> np.ndarray:
    if isinstance(obj, LandmarkSet):
        return obj.points[None]
    if isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], LandmarkSet):
        return np.stack([ls.points for ls in obj])
    return np.asarray(obj, dtype=np.float64)


class Adam:
    """Standard ADAM with bias correction, updating parameters in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params  # (name, value, grad) triples
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(v) for _, v, _ in params]
        self.v = [np.zeros_like(v) for _, v, _ in params]

    def step(self):
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for (_, value, grad), m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            value -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(value.dtype)


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass
class Checkpoint:
    """Named weight tensors plus config echo and shape-model fingerprint."""

    meta: dict
    tensors: dict[str, np.ndarray]

    @property
    def net_config(self) -> NetConfig:
        return NetConfig.from_dict(self.meta["net_config"])

    @property
    def model_fingerprint(self) -> str:
        return self.meta["shape_model_fingerprint"]

    def save(self, path) -> None:
        payload = {f"tensor/{k}": v for k, v in self.tensors.items()}
        meta = dict(self.meta)
        meta["format"] = CHECKPOINT_FORMAT
        meta["format_version"] = CHECKPOINT_FORMAT_VERSION
        buf = io.BytesIO()
        np.savez(buf, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **payload)
        Path(path).write_bytes(buf.getvalue())

    @staticmethod
    def load(path) -> "Checkpoint":
        try:
            with np.load(path) as data:
                if "__meta__" not in data:
                    raise ContainerFormatError("checkpoint is missing its metadata record")
                meta = json.loads(bytes(data["__meta__"]).decode())
                tensors = {
                    k[len("tensor/") :]: data[k] for k in data.files if k.startswith("tensor/")
                }
        except (OSError, ValueError) as exc:
            raise ContainerFormatError(f"cannot read checkpoint: {exc}") from exc
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ContainerFormatError(
                f"not a checkpoint container (format={meta.get('format')!r})"
            )
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ContainerVersionError(
                f"unsupported checkpoint format_version {meta.get('format_version')!r}"
            )
        return Checkpoint(meta=meta, tensors=tensors)


class Predictor:
    """Checkpoint restored into a ready-to-run network + PCA layer."""

    def __init__(self, checkpoint: Checkpoint, model: ShapeModel):
        if checkpoint.model_fingerprint != model.fingerprint():
            raise ModelMismatchError(
                "checkpoint was trained against a different shape model "
                f"(checkpoint {checkpoint.model_fingerprint[:12]}..., "
                f"loaded {model.fingerprint()[:12]}...)"
            )
        self.model = model
        self.network = build_network(checkpoint.net_config, seed=checkpoint.meta.get("net_seed", 0))
        self.network.load_state_dict(checkpoint.tensors)

    def predict_raw(self, images: np.ndarray) -> np.ndarray:
        from .feature_net import forward_raw

        return forward_raw(self.network, images).astype(np.float64)

    def predict_coords(self, images: np.ndarray) -> np.ndarray:
        raw = self.predict_raw(images)
        p = self.network.config.num_shape_params
        return layer_forward_coords(self.model, raw[:, :p], raw[:, p:])


def predict(checkpoint: Checkpoint, images: np.ndarray, model: ShapeModel):
    """Single forward pass: images to (landmarks, parameters) per sample."""
    predictor = Predictor(checkpoint, model)
    raw = predictor.predict_raw(images)
    p = predictor.network.config.num_shape_params
    coords = layer_forward_coords(model, raw[:, :p], raw[:, p:])
    landmarks = [LandmarkSet(c, Frame.CROP) for c in coords]
    params = [
        ParamVector(row[:p], GlobalTransform(row[p], row[p + 1], row[p + 2], row[p + 3]))
        for row in raw
    ]
    return landmarks, params


# ---------------------------------------------------------------------------
# Training


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_error: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_error: float = float("inf")


def _augmented_images_landmarks(dataset, indices, aug, global_seed, epoch):
    images, targets = [], []
    for idx in indices:
        sample = dataset.samples[idx]
        if aug is not None:
            for attempt in range(8):
                seed = np.random.SeedSequence([global_seed, epoch, int(idx), attempt])
                try:
                    sample = augment(dataset.samples[idx], aug, seed)
                    break
                except SampleRejectedError:
                    continue
            else:
                sample = dataset.samples[idx]  # fall back to the clean crop
        images.append(sample.image)
        targets.append(sample.landmarks.points)
    return np.stack(images), np.stack(targets)


def train(
    dataset_train: Dataset,
    config: TrainConfig,
    model: ShapeModel,
    net_config: NetConfig | None = None,
    dataset_val: Dataset | None = None,
    log_path=None,
) -> TrainResult:
    """Optimize a fresh network end-to-end against crop-frame landmarks.

    Returns the best-by-validation checkpoint. With no explicit validation
    set, a deterministic fraction of the training manifest is held out.
    Raises TrainingDivergedError when the loss becomes non-finite.
    """
    if len(dataset_train) == 0:
        raise DimensionError("training dataset is empty")
    if dataset_train.num_landmarks != model.num_landmarks:
        raise DimensionError(
            f"dataset has L={dataset_train.num_landmarks}, model expects "
            f"L={model.num_landmarks}"
        )
    if config.num_shape_params > model.p_max:
        raise DimensionError(
            f"num_shape_params={config.num_shape_params} exceeds model p_max={model.p_max}"
        )
    if net_config is None:
        net_config = default_config_for_input(
            dataset_train.out_size,
            config.num_shape_params,
            in_channels=dataset_train.in_channels,
        )
    if net_config.num_shape_params != config.num_shape_params:
        raise DimensionError("net_config.num_shape_params must match the train config")

    rng = np.random.default_rng(config.seed)
    if dataset_val is None:
        order = rng.permutation(len(dataset_train))
        num_val = max(1, int(round(config.val_fraction * len(dataset_train)))) if len(dataset_train) > 1 else 0
        val_idx, train_idx = order[:num_val], order[num_val:]
        if len(train_idx) == 0:
            train_idx, val_idx = order, order
        dataset_val = dataset_train.subset(sorted(val_idx.tolist()))
        dataset_train = dataset_train.subset(sorted(train_idx.tolist()))

    network = build_network(net_config, seed=config.seed)
    center_head_on_model(network, model.mean_shape)
    optimizer = Adam(
        network.parameters(),
        lr=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    p = config.num_shape_params
    fingerprint = model.fingerprint()
    log_fh = open(log_path, "w") if log_path is not None else None

    def _log(record: dict):
        if log_fh is not None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()

    def make_checkpoint(state: dict) -> Checkpoint:
        return Checkpoint(
            meta={
                "net_config": net_config.to_dict(),
                "net_seed": config.seed,
                "train_config": config.to_dict(),
                "shape_model_fingerprint": fingerprint,
            },
            tensors={k: v.copy() for k, v in state.items()},
        )

    result = TrainResult(checkpoint=make_checkpoint(network.state_dict()))
    num_train = len(dataset_train)

    try:
        for epoch in range(config.epochs):
            order = rng.permutation(num_train)
            losses = []
            for start in range(0, num_train, config.batch_size):
                batch_idx = order[start : start + config.batch_size]
                images, targets = _augmented_images_landmarks(
                    dataset_train, batch_idx, config.augment, config.seed, epoch
                )
                raw = network.forward(
                    check_images(images, net_config), train=True
                )
                raw64 = raw.astype(np.float64)
                pred = layer_forward_coords(model, raw64[:, :p], raw64[:, p:])
                loss = point_loss(pred, targets, config.loss_kind)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"loss became non-finite at epoch {epoch + 1}, "
                        f"batch {start // config.batch_size + 1}; last finite epoch "
                        f"{epoch}"
                    )
                losses.append(loss)
                grad_pred = point_loss_grad(pred, targets, config.loss_kind)
                layer_grads = layer_backward_coords(
                    model, raw64[:, :p], raw64[:, p:], grad_pred
                )
                network.backward(layer_grads.packed().astype(net_config.np_dtype()))
                optimizer.step()

            val_error = _validation_error(network, model, dataset_val, p, net_config)
            train_loss = float(np.mean(losses))
            record = EpochRecord(epoch + 1, train_loss, val_error)
            result.history.append(record)
            _log({"epoch": epoch + 1, "split": "train", "loss": train_loss,
                  "normalized_error": None})
            _log({"epoch": epoch + 1, "split": "val", "loss": None,
                  "normalized_error": val_error})

            if val_error < result.best_val_error:
                result.best_val_error = val_error
                result.best_epoch = epoch + 1
                result.checkpoint = make_checkpoint(network.state_dict())
            if config.early_stop_error is not None and val_error < config.early_stop_error:
                break
    finally:
        if log_fh is not None:
            log_fh.close()

    return result


def _validation_error(network, model, dataset_val, p, net_config, batch_size=64):
    if len(dataset_val) == 0:
        return float("nan")
    errors = []
    for start in range(0, len(dataset_val), batch_size):
        chunk = dataset_val.samples[start : start + batch_size]
        images = np.stack([s.image for s in chunk])
        raw = network.forward(check_images(images, net_config)).astype(np.float64)
        coords = layer_forward_coords(model, raw[:, :p], raw[:, p:])
        for sample, pred in zip(chunk, coords):
            errors.append(normalized_p2p_error(pred, sample.landmarks.points))
    return float(np.mean(errors))
