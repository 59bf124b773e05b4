import hashlib

import numpy as np
import pytest

from crowdcast.density import DensitySequence
from crowdcast.errors import TrainingDivergedError
from crowdcast.model import DensityForecastModel
from crowdcast.train import (
    TrainConfig,
    WindowDataset,
    latent_mse,
    make_windows,
    train_autoencoder,
    train_forecaster,
    write_loss_trace,
)


def _sequence(t=40, seed=0):
    rng = np.random.default_rng(seed)
    frames = np.zeros((t, 80, 80), dtype=np.float32)
    # a handful of wandering impulses so the data has learnable structure
    xs = rng.uniform(10, 70, 5)
    ys = rng.uniform(10, 70, 5)
    vx = rng.uniform(-0.5, 0.5, 5)
    vy = rng.uniform(-0.5, 0.5, 5)
    for k in range(t):
        for i in range(5):
            frames[k, int(ys[i] + vy[i] * k) % 80, int(xs[i] + vx[i] * k) % 80] = 1.0
    return DensitySequence(frames)


def _hash(params):
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(params[name].data.tobytes())
    return h.hexdigest()


class TestWindowDataset:
    def test_minimum_length_yields_one_window(self):
        ds = make_windows(_sequence(20))
        assert len(ds) == 1
        assert ds.offsets == [0]

    def test_stride_one_offsets(self):
        ds = make_windows(_sequence(25))
        assert ds.offsets == [0, 1, 2, 3, 4, 5]

    def test_stride_five_offsets(self):
        ds = make_windows(_sequence(40), stride=5)
        assert ds.offsets == [0, 5, 10, 15, 20]

    def test_window_slices_are_contiguous(self):
        ds = make_windows(_sequence(25))
        xin, xout = ds.window(2)
        assert xin.shape == (8, 80, 80) and xout.shape == (12, 80, 80)
        assert np.array_equal(xin, ds.sequence.frames[2:10])
        assert np.array_equal(xout, ds.sequence.frames[10:22])

    def test_too_short_sequence_rejected(self):
        with pytest.raises(ValueError, match="too short"):
            make_windows(DensitySequence(np.zeros((19, 80, 80))))


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.batch_size, cfg.iterations, cfg.learning_rate) == (16, 1000, 0.001)
        assert cfg.target_transform == "sqrt"

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(target_transform="log")


class TestAutoencoderTraining:
    def test_zero_learning_rate_leaves_parameters_unchanged(self):
        model = DensityForecastModel(seed=0)
        before = _hash(model.named_parameters())
        trace = train_autoencoder(make_windows(_sequence()), model,
                                  TrainConfig(iterations=3, learning_rate=0.0))
        assert len(trace) == 3
        assert _hash(model.named_parameters()) == before

    def test_seeded_run_is_bitwise_reproducible(self):
        cfg = TrainConfig(iterations=4, batch_size=2, seed=9)
        hashes, traces = [], []
        for _ in range(2):
            model = DensityForecastModel(seed=1)
            traces.append(train_autoencoder(make_windows(_sequence()), model, cfg))
            hashes.append(_hash(model.named_parameters()))
        assert hashes[0] == hashes[1]
        assert traces[0] == traces[1]

    def test_short_run_reduces_loss(self):
        model = DensityForecastModel(seed=0)
        trace = train_autoencoder(make_windows(_sequence()), model,
                                  TrainConfig(iterations=30, batch_size=4))
        assert min(trace[-5:]) < trace[0]

    def test_forecaster_parameters_never_touched(self):
        model = DensityForecastModel(seed=0)
        before = _hash(model.forecaster_parameters())
        train_autoencoder(make_windows(_sequence()), model,
                          TrainConfig(iterations=3, batch_size=2))
        assert _hash(model.forecaster_parameters()) == before

    def test_divergence_reported_with_iteration(self):
        model = DensityForecastModel(seed=0)
        model.named_parameters()["encoder.0.weight"].data[...] = np.nan
        with pytest.raises(TrainingDivergedError) as exc:
            train_autoencoder(make_windows(_sequence()), model,
                              TrainConfig(iterations=2, batch_size=2))
        assert exc.value.iteration == 0


class TestForecasterTraining:
    def test_autoencoder_parameters_are_frozen(self):
        model = DensityForecastModel(seed=0)
        before = _hash(model.autoencoder_parameters())
        train_forecaster(make_windows(_sequence()), model,
                         TrainConfig(iterations=3, batch_size=2))
        assert _hash(model.autoencoder_parameters()) == before

    def test_seeded_run_is_bitwise_reproducible(self):
        cfg = TrainConfig(iterations=3, batch_size=2, seed=4)
        hashes = []
        for _ in range(2):
            model = DensityForecastModel(seed=2)
            train_forecaster(make_windows(_sequence()), model, cfg)
            hashes.append(_hash(model.named_parameters()))
        assert hashes[0] == hashes[1]

    def test_training_beats_untrained_latent_mse(self):
        ds = make_windows(_sequence())
        trained = DensityForecastModel(seed=3)
        untrained = DensityForecastModel(seed=3)
        train_forecaster(ds, trained, TrainConfig(iterations=60, batch_size=4))
        assert latent_mse(trained, ds) < latent_mse(untrained, ds)


def test_write_loss_trace_round_trips_exactly(tmp_path):
    p = tmp_path / "trace.csv"
    trace = [0.5, 0.25, 0.125]
    write_loss_trace(trace, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "iteration,loss"
    assert [float(l.split(",")[1]) for l in lines[1:]] == trace
