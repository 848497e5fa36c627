"""shapereg: landmark regression through a differentiable PCA shape layer."""

from .backend import active_backend, available_backends, set_backend
from .data_pipeline import (
    AugmentConfig,
    CropRecord,
    Dataset,
    Sample,
    augment,
    crop_and_resize,
    landmarks_to_original,
    load_dataset,
    load_manifest,
    parse_cat,
    parse_csv_landmarks,
    parse_pts,
)
from .eval_metrics import (
    BenchmarkResult,
    EvalResult,
    benchmark_fps,
    evaluate,
    normalized_p2p_error,
    parameter_sweep,
)
from .feature_net import (
    NetConfig,
    build_network,
    count_parameters,
    default_config_for_input,
    net_forward,
    spatial_trace,
)
from .pca_layer import (
    GlobalTransform,
    ParamVector,
    build_transform_matrix,
    layer_backward,
    layer_backward_coords,
    layer_forward,
    layer_forward_coords,
)
from .shape_model import (
    Frame,
    LandmarkSet,
    ShapeModel,
    align_corpus,
    apply_eigenvalue_scaling,
    compute_pca,
    load_model,
    project,
    reconstruct,
    save_model,
)
from .synth_data import SynthSpec, baseline_mean_shape_error, generate_dataset
from .train_engine import (
    Checkpoint,
    Predictor,
    TrainConfig,
    point_loss,
    predict,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "BenchmarkResult",
    "Checkpoint",
    "CropRecord",
    "Dataset",
    "EvalResult",
    "Frame",
    "GlobalTransform",
    "LandmarkSet",
    "NetConfig",
    "ParamVector",
    "Predictor",
    "Sample",
    "ShapeModel",
    "SynthSpec",
    "TrainConfig",
    "active_backend",
    "align_corpus",
    "apply_eigenvalue_scaling",
    "augment",
    "available_backends",
    "baseline_mean_shape_error",
    "benchmark_fps",
    "build_network",
    "build_transform_matrix",
    "compute_pca",
    "count_parameters",
    "crop_and_resize",
    "default_config_for_input",
    "evaluate",
    "generate_dataset",
    "landmarks_to_original",
    "layer_backward",
    "layer_backward_coords",
    "layer_forward",
    "layer_forward_coords",
    "load_dataset",
    "load_manifest",
    "load_model",
    "net_forward",
    "normalized_p2p_error",
    "parameter_sweep",
    "parse_cat",
    "parse_csv_landmarks",
    "parse_pts",
    "point_loss",
    "predict",
    "project",
    "reconstruct",
    "save_model",
    "set_backend",
    "spatial_trace",
    "train",
]
