"""Sliding-window dataset and the two-stage training procedure.

Stage one fits the encoder/decoder pair as an autoencoder with BCE over the
input frames of each window. Stage two freezes the autoencoder, encodes the
output frames as regression targets, and fits the temporal forecaster with
MSE in latent space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .density import DensitySequence
from .errors import TrainingDivergedError
from .model import T_IN, T_OUT, DensityForecastModel
from .nn import AdamState, adam_step

WINDOW = T_IN + T_OUT


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    iterations: int = 1000
    learning_rate: float = 0.001
    seed: int = 0
    target_transform: str = "sqrt"  # "sqrt" | "identity"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.target_transform not in ("sqrt", "identity"):
            raise ValueError(f"unknown target_transform {self.target_transform!r}")


@dataclass
class WindowDataset:
    """Windows of 20 consecutive frames (8 input + 12 output) at fixed stride."""

    sequence: DensitySequence
    stride: int = 1
    offsets: list[int] = field(init=False)

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        n = len(self.sequence)
        if n < WINDOW:
            raise ValueError(f"sequence too short for windows: {n} < {WINDOW}")
        self.offsets = list(range(0, n - WINDOW + 1, self.stride))

    def __len__(self):
        return len(self.offsets)

    def input_frames(self, i: int) -> np.ndarray:
        k = self.offsets[i]
        return self.sequence.frames[k : k + T_IN]

    def output_frames(self, i: int) -> np.ndarray:
        k = self.offsets[i]
        return self.sequence.frames[k + T_IN : k + WINDOW]

    def window(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.input_frames(i), self.output_frames(i)


def make_windows(seq: DensitySequence, stride: int = 1) -> WindowDataset:
    return WindowDataset(seq, stride)


def _check_finite(loss: float, iteration: int, batch):
    if not np.isfinite(loss):
        raise TrainingDivergedError(iteration, batch)


def train_autoencoder(
    dataset: WindowDataset,
    model: DensityForecastModel,
    config: TrainConfig,
    progress=None,
) -> list[float]:
    """Fit encoder + decoder; returns the per-iteration loss trace."""
    rng = np.random.default_rng(config.seed)
    params = list(model.autoencoder_parameters().values())
    state = AdamState.for_params(params, config.learning_rate)
    trace = []
    for it in range(config.iterations):
        batch = rng.integers(0, len(dataset), size=config.batch_size)
        frames = np.concatenate([dataset.input_frames(i) for i in batch])  # (B*T_in, H, W)
        x = Tensor(np.sqrt(frames)[:, None])
        if config.target_transform == "sqrt":
            target = x
        else:
            target = Tensor(frames[:, None])
        tape = Tape()
        recon = model.decode(model.encode(x, tape), tape)
        if not np.isfinite(recon.data).all():
            raise TrainingDivergedError(it, batch)
        loss = ad.bce_loss(recon, target, tape)
        value = loss.item()
        _check_finite(value, it, batch)
        if config.learning_rate != 0.0:
            tape.backward(loss)
            adam_step(params, [tape.grad(p) for p in params], state)
        trace.append(value)
        if progress is not None:
            progress(it, value)
    return trace


def train_forecaster(
    dataset: WindowDataset,
    model: DensityForecastModel,
    config: TrainConfig,
    progress=None,
) -> list[float]:
    """Fit the temporal forecaster with the autoencoder frozen.

    Encoder/decoder run off-tape, so no gradient buffer is ever allocated
    for their parameters.
    """
    rng = np.random.default_rng(config.seed)
    params = list(model.forecaster_parameters().values())
    state = AdamState.for_params(params, config.learning_rate)
    # encoder is frozen, so per-frame latents can be computed once up front
    latents = _encode_frames(model, dataset.sequence.frames)  # (T, K, G, G)
    trace = []
    for it in range(config.iterations):
        batch = rng.integers(0, len(dataset), size=config.batch_size)
        z_in = Tensor(np.stack(
            [latents[k : k + T_IN].transpose(1, 0, 2, 3) for k in (dataset.offsets[i] for i in batch)]))
        z_out = Tensor(np.stack(
            [latents[k + T_IN : k + WINDOW].transpose(1, 0, 2, 3)
             for k in (dataset.offsets[i] for i in batch)]))
        tape = Tape()
        pred = model.forecast_latent(z_in, tape)
        loss = ad.mse_loss(pred, z_out, tape)
        value = loss.item()
        _check_finite(value, it, batch)
        if config.learning_rate != 0.0:
            tape.backward(loss)
            adam_step(params, [tape.grad(p) for p in params], state)
        trace.append(value)
        if progress is not None:
            progress(it, value)
    return trace


def _encode_frames(model: DensityForecastModel, frames: np.ndarray,
                   chunk: int = 64) -> np.ndarray:
    """(T, H, W) frames -> (T, K, G, G) per-frame latents, off-tape."""
    parts = []
    for start in range(0, frames.shape[0], chunk):
        x = Tensor(np.sqrt(frames[start : start + chunk])[:, None])
        parts.append(model.encode(x).data)
    return np.concatenate(parts)


def _encode_sequence(model: DensityForecastModel, frames: np.ndarray) -> np.ndarray:
    """(T, H, W) frames -> (K, T, G, G) latent sequence, off-tape."""
    z = model.encode(Tensor(np.sqrt(frames)[:, None]))
    return np.ascontiguousarray(z.data.transpose(1, 0, 2, 3))


def latent_mse(model: DensityForecastModel, dataset: WindowDataset, indices=None) -> float:
    """Mean latent-space forecast MSE over the given windows (all by default)."""
    if indices is None:
        indices = range(len(dataset))
    total = 0.0
    count = 0
    for i in indices:
        z_in = Tensor(_encode_sequence(model, dataset.input_frames(i))[None])
        z_out = _encode_sequence(model, dataset.output_frames(i))[None]
        pred = model.forecast_latent(z_in)
        total += float(np.mean((pred.data - z_out) ** 2))
        count += 1
    return total / max(count, 1)


def write_loss_trace(trace, path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,loss\n")
        for i, v in enumerate(trace):
            fh.write(f"{i},{v!r}\n")
