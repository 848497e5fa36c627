"""Fully convolutional regression network producing p+4 parameters.

The trunk alternates C2DB blocks (repeated 3x3 convolutions, stride 1, no
padding, each followed by ReLU) with DN blocks (3x3 convolution, stride 2,
padding 1, ReLU, then instance normalization). There are no fully connected
layers: a 1x1 convolution maps the final feature map to p+4 channels and
global average pooling reduces the remaining spatial extent to a vector.

Output layout: the first p values are shape weights, the last four are
(s, theta, tx, ty). Head biases start at scale 1, rotation 0, translation at
the crop center, and the head weights are drawn tiny, so a fresh network
predicts approximately the mean shape centered in the crop.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ArchitectureError, DimensionError
from .layers import (
    Conv2D,
    GlobalAvgPool,
    InstanceNorm,
    Layer,
    Network,
    OutputCalibration,
    ReLU,
)
from .pca_layer import GlobalTransform, ParamVector

TABLE_CHANNEL_PLAN = (64, 64, 128, 128, 256, 256, 512, 256, 128)
TABLE_FREQUENCIES = (2, 1, 2, 1, 4, 1, 4, 1, 3)

HEAD_WEIGHT_SCALE = 1e-2


@dataclass(frozen=True)
class NetConfig:
    """Architecture settings for :func:`build_network`."""

    num_shape_params: int
    in_channels: int = 3
    separable_convs: bool = False
    channel_plan: tuple[int, ...] = TABLE_CHANNEL_PLAN
    block_frequencies: tuple[int, ...] = TABLE_FREQUENCIES
    input_size: int = 224
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "channel_plan", tuple(int(c) for c in self.channel_plan))
        object.__setattr__(
            self, "block_frequencies", tuple(int(f) for f in self.block_frequencies)
        )
        if self.num_shape_params < 1:
            raise ArchitectureError("num_shape_params must be >= 1")
        if self.in_channels < 1:
            raise ArchitectureError("in_channels must be >= 1")
        if len(self.channel_plan) != len(self.block_frequencies):
            raise ArchitectureError(
                "channel_plan and block_frequencies must have equal length"
            )
        if not self.channel_plan:
            raise ArchitectureError("channel_plan must not be empty")
        for i, freq in enumerate(self.block_frequencies):
            if _stage_kind(i) == "DN" and freq != 1:
                raise ArchitectureError(f"stage {i + 1} (DN) must have frequency 1")
            if freq < 1:
                raise ArchitectureError(f"stage {i + 1} has non-positive frequency")
        if self.dtype not in ("float32", "float64"):
            raise ArchitectureError(f"unsupported dtype {self.dtype!r}")

    @property
    def output_dim(self) -> int:
        return self.num_shape_params + 4

    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "NetConfig":
        data = dict(data)
        data["channel_plan"] = tuple(data["channel_plan"])
        data["block_frequencies"] = tuple(data["block_frequencies"])
        return NetConfig(**data)


def _stage_kind(index: int) -> str:
    return "C2DB" if index % 2 == 0 else "DN"


def spatial_trace(config: NetConfig) -> list[int]:
    """Per-stage spatial sizes [input, stage1, ..., stageK].

    Raises ArchitectureError naming the first stage whose output extent
    would be non-positive.
    """
    size = config.input_size
    trace = [size]
    for i, freq in enumerate(config.block_frequencies):
        kind = _stage_kind(i)
        if kind == "C2DB":
            size = size - 2 * freq
        else:
            size = (size + 2 * 1 - 3) // 2 + 1
        if size < 1:
            raise ArchitectureError(
                f"stage {i + 1} ({kind}) reduces the spatial extent to {size} "
                f"for input size {config.input_size}"
            )
        trace.append(size)
    return trace


class FeatureNet(Network):
    """Network plus its config, seed, and derived spatial trace."""

    def __init__(self, layers: list[Layer], config: NetConfig, seed: int, trace: list[int]):
        super().__init__(layers)
        self.config = config
        self.seed = seed
        self.stage_trace = trace


def _c2db_convs(c_in, c_out, config, rng, dtype, label):
    """One C2DB convolution, optionally split into a 3x1 / 1x3 pair."""
    if not config.separable_convs:
        return [Conv2D(c_in, c_out, (3, 3), 1, 0, rng, dtype, name=label)]
    mid = min(c_in, c_out)
    return [
        Conv2D(c_in, mid, (3, 1), 1, 0, rng, dtype, name=f"{label}v"),
        Conv2D(mid, c_out, (1, 3), 1, 0, rng, dtype, name=f"{label}h"),
    ]


def build_network(config: NetConfig, seed: int = 0) -> FeatureNet:
    """Assemble the trunk and regression head for the given plan."""
    trace = spatial_trace(config)
    rng = np.random.default_rng(seed)
    dtype = config.np_dtype()

    layers: list[Layer] = []
    c_prev = config.in_channels
    for i, (c_out, freq) in enumerate(zip(config.channel_plan, config.block_frequencies)):
        stage = i + 1
        if _stage_kind(i) == "C2DB":
            for rep in range(freq):
                label = f"s{stage}c{rep + 1}"
                for conv in _c2db_convs(c_prev, c_out, config, rng, dtype, label):
                    layers.append(conv)
                layers.append(ReLU())
                c_prev = c_out
        else:
            layers.append(Conv2D(c_prev, c_out, (3, 3), 2, 1, rng, dtype, name=f"s{stage}dn"))
            layers.append(ReLU())
            layers.append(InstanceNorm())
            c_prev = c_out

    head = Conv2D(
        c_prev,
        config.output_dim,
        (1, 1),
        1,
        0,
        rng,
        dtype,
        weight_scale=HEAD_WEIGHT_SCALE,
        name="head",
    )
    layers.append(head)
    layers.append(GlobalAvgPool())

    # Output units: shape weights are already standard-deviation scaled; the
    # transform outputs get fixed gains so trainable weights stay order-1,
    # and offsets that make a fresh network predict scale 1, rotation 0, and
    # the crop center.
    center = config.input_size / 2.0
    gain = np.ones(config.output_dim)
    offset = np.zeros(config.output_dim)
    p = config.num_shape_params
    gain[p:] = [0.25, 0.5, config.input_size / 4.0, config.input_size / 4.0]
    offset[p:] = [1.0, 0.0, center, center]
    layers.append(OutputCalibration(gain, offset, dtype))

    net = FeatureNet(layers, config, seed, trace)
    first_conv = next(l for l in net.layers if isinstance(l, Conv2D))
    first_conv._first = True  # gradient w.r.t. the input image is never needed
    return net


def check_images(images: np.ndarray, config: NetConfig) -> np.ndarray:
    """Validate (N, H, W, C) images against the config; returns net-dtype NHWC."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4:
        raise DimensionError(f"images must be (N, H, W, C), got shape {images.shape}")
    n, h, w, c = images.shape
    if (h, w) != (config.input_size, config.input_size):
        raise DimensionError(
            f"expected {config.input_size}x{config.input_size} images, got {h}x{w}"
        )
    if c != config.in_channels:
        raise DimensionError(f"expected {config.in_channels} channels, got {c}")
    return np.ascontiguousarray(images.astype(config.np_dtype(), copy=False))


def forward_raw(network: FeatureNet, images: np.ndarray, train: bool = False) -> np.ndarray:
    """(N, H, W, C) images to raw (N, p+4) parameter rows."""
    return network.forward(check_images(images, network.config), train=train)


def net_forward(network: FeatureNet, images: np.ndarray) -> list[ParamVector]:
    """Regress one ParamVector per image."""
    raw = forward_raw(network, images)
    p = network.config.num_shape_params
    out = []
    for row in raw.astype(np.float64):
        s, theta, tx, ty = row[p:]
        out.append(ParamVector(row[:p], GlobalTransform(s, theta, tx, ty)))
    return out


def count_parameters(network: Network) -> int:
    """Exact count of trainable scalars."""
    return int(sum(value.size for _, value, _ in network.parameters()))


def output_calibration(network: FeatureNet) -> OutputCalibration:
    return next(l for l in reversed(network.layers) if isinstance(l, OutputCalibration))


def center_head_on_model(network: FeatureNet, mean_shape: np.ndarray) -> None:
    """Point the translation offset at crop_center - mean_centroid.

    With an identity transform elsewhere, the untrained network then places
    the model's mean shape centered in the crop, whatever centroid the
    canonical-frame mean happens to carry.
    """
    config = network.config
    centroid = np.asarray(mean_shape).reshape(-1, 2).mean(axis=0)
    center = config.input_size / 2.0
    calib = output_calibration(network)
    calib.offset[config.num_shape_params + 2] = center - centroid[0]
    calib.offset[config.num_shape_params + 3] = center - centroid[1]


def default_config_for_input(
    input_size: int,
    num_shape_params: int,
    in_channels: int = 3,
    separable_convs: bool = False,
    dtype: str = "float32",
) -> NetConfig:
    """A feasible plan for the given input size.

    The Table-style 9-stage plan needs at least 205 input pixels; smaller
    inputs fall back to reduced plans with the same block structure.
    """
    if input_size >= 205:
        plan, freqs = TABLE_CHANNEL_PLAN, TABLE_FREQUENCIES
    elif input_size >= 61:
        plan, freqs = (16, 16, 32, 32, 64, 64, 64), (2, 1, 2, 1, 2, 1, 2)
    elif input_size >= 29:
        plan, freqs = (16, 16, 32, 32, 48), (2, 1, 2, 1, 2)
    else:
        raise ArchitectureError(f"no default plan for input size {input_size}")
    return NetConfig(
        num_shape_params=num_shape_params,
        in_channels=in_channels,
        separable_convs=separable_convs,
        channel_plan=plan,
        block_frequencies=freqs,
        input_size=input_size,
        dtype=dtype,
    )
