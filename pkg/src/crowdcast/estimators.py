"""Scikit-learn style front ends over the forecasting pipeline.

These wrap the training/inference machinery in fit/predict estimators so the
forecasters compose with pipelines and grid search. Inputs are density-map
arrays: a training sequence is (T, H, W) and a prediction window is
(8, H, W) or a batch (n, 8, H, W).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baselines import constvel_forecast, persistence_forecast
from .density import AnnotationStream, DensitySequence
from .metrics import evaluate_sequence
from .model import T_IN, T_OUT, DensityForecastModel
from .simulate import track_oracle
from .train import TrainConfig, make_windows, train_autoencoder, train_forecaster


def _as_sequence(X) -> DensitySequence:
    if isinstance(X, DensitySequence):
        return X
    return DensitySequence(np.asarray(X, dtype=np.float32))


def _as_windows(X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != T_IN:
        raise ValueError(f"expected (n, {T_IN}, H, W) windows, got {arr.shape}")
    return arr


class DensityForecaster(BaseEstimator):
    """Patch-based latent temporal forecaster (or its whole-map variant)."""

    def __init__(self, latent_dim=None, variant="patch", ae_iterations=1000,
                 forecaster_iterations=1000, learning_rate=0.001, batch_size=16,
                 stride=1, seed=0, target_transform="sqrt"):
        self.latent_dim = latent_dim
        self.variant = variant
        self.ae_iterations = ae_iterations
        self.forecaster_iterations = forecaster_iterations
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.stride = stride
        self.seed = seed
        self.target_transform = target_transform

    def fit(self, X, y=None):
        seq = _as_sequence(X)
        windows = make_windows(seq, self.stride)
        self.model_ = DensityForecastModel(self.latent_dim, seed=self.seed,
                                           variant=self.variant)
        common = dict(batch_size=self.batch_size, learning_rate=self.learning_rate,
                      seed=self.seed, target_transform=self.target_transform)
        self.ae_loss_trace_ = train_autoencoder(
            windows, self.model_, TrainConfig(iterations=self.ae_iterations, **common))
        self.forecaster_loss_trace_ = train_forecaster(
            windows, self.model_, TrainConfig(iterations=self.forecaster_iterations, **common))
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("DensityForecaster is not fitted yet")
        batch = _as_windows(X)
        out = np.stack([self.model_.forecast(DensitySequence(w)).frames for w in batch])
        return out if np.asarray(X).ndim == 4 else out[0]

    def score(self, X, y, sigma=3.0):
        """Negative mean Average symmetric divergence over windows (higher is better)."""
        batch = _as_windows(X)
        gt = np.asarray(y, dtype=np.float32)
        if gt.ndim == 3:
            gt = gt[None]
        scores = []
        for w, g in zip(batch, gt):
            pred = self.model_.forecast(DensitySequence(w))
            report = evaluate_sequence(pred, DensitySequence(g), sigma=sigma)
            scores.append(report.average[2])
        return -float(np.mean(scores))


class PersistenceForecaster(BaseEstimator):
    """Repeats the last observed frame; the sanity floor for comparisons."""

    def __init__(self, t_out=T_OUT):
        self.t_out = t_out

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        batch = _as_windows(X)
        out = np.stack(
            [persistence_forecast(DensitySequence(w), self.t_out).frames for w in batch]
        )
        return out if np.asarray(X).ndim == 4 else out[0]


class ConstantVelocityForecaster(BaseEstimator):
    """Linear extrapolation of oracle-tracked annotations, rendered to maps."""

    def __init__(self, width=80, height=80, sigma=3.0, t_out=T_OUT):
        self.width = width
        self.height = height
        self.sigma = sigma
        self.t_out = t_out

    def fit(self, X=None, y=None):
        return self

    def predict(self, X, last_frame=None):
        """X is an AnnotationStream covering the input window."""
        if not isinstance(X, AnnotationStream):
            raise TypeError("ConstantVelocityForecaster.predict expects an AnnotationStream")
        seq = constvel_forecast(track_oracle(X), self.t_out, self.width, self.height,
                                self.sigma, last_frame=last_frame)
        return seq.frames
