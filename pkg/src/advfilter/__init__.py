"""Norm-constrained targeted adversarial images and filter defenses for a small numpy CNN."""

from .attack import AttackConfig, AttackResult, craft
from .classifier import (
    Classifier,
    Prediction,
    accuracy,
    default_classifier,
    forward,
    input_gradient,
    load_model,
    loss,
    loss_and_input_gradient,
    save_model,
    train,
)
from .core import (
    FormatError,
    Image,
    LabeledDataset,
    NumericError,
    ParameterError,
    ShapeError,
    generate_shape_dataset,
    load_idx_dataset,
    load_image,
    save_image,
)
from .filters import FilterSpec, apply_filter, gaussian_kernel
from .harness import EvalRecord, ExperimentConfig, evaluate_one, run_experiment, summarize
from .norms import NormKind, distance, norm, project_to_ball

__all__ = [
    "AttackConfig", "AttackResult", "craft",
    "Classifier", "Prediction", "accuracy", "default_classifier", "forward", "input_gradient",
    "load_model", "loss", "loss_and_input_gradient", "save_model", "train",
    "FormatError", "Image", "LabeledDataset", "NumericError", "ParameterError", "ShapeError",
    "generate_shape_dataset", "load_idx_dataset", "load_image", "save_image",
    "FilterSpec", "apply_filter", "gaussian_kernel",
    "EvalRecord", "ExperimentConfig", "evaluate_one", "run_experiment", "summarize",
    "NormKind", "distance", "norm", "project_to_ball",
]
