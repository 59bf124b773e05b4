"""Patch-based crowd density forecasting at desk scale."""

from .autodiff import Tape, Tensor
from .density import (
    AnnotationRecord,
    AnnotationStream,
    DensitySequence,
    rasterize,
    read_sequence,
    resize_area,
    smooth_spatiotemporal,
    sqrt_transform,
    square_transform,
    write_sequence,
)
from .estimators import ConstantVelocityForecaster, DensityForecaster, PersistenceForecaster
from .metrics import MetricReport, evaluate_sequence, inverse_kl, js_divergence, kl_divergence, normalize
from .model import DensityForecastModel
from .simulate import Scenario, simulate, track_oracle
from .train import TrainConfig, make_windows, train_autoencoder, train_forecaster

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "AnnotationStream",
    "ConstantVelocityForecaster",
    "DensityForecastModel",
    "DensityForecaster",
    "DensitySequence",
    "MetricReport",
    "PersistenceForecaster",
    "Scenario",
    "Tape",
    "Tensor",
    "TrainConfig",
    "evaluate_sequence",
    "inverse_kl",
    "js_divergence",
    "kl_divergence",
    "make_windows",
    "normalize",
    "rasterize",
    "read_sequence",
    "resize_area",
    "simulate",
    "smooth_spatiotemporal",
    "sqrt_transform",
    "square_transform",
    "track_oracle",
    "train_autoencoder",
    "train_forecaster",
    "write_sequence",
]
