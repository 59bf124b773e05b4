"""Self-test machinery: gradient checks and shape-pipeline checks.

Used by the CLI ``selftest`` subcommand. Gradients are verified against a
central finite-difference oracle evaluated in float64.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import convops
from .autodiff import Tape, Tensor
from .model import DensityForecastModel, T_IN, T_OUT, LATENT_GRID, MAP_SIZE


def _loss_through(op, inputs, coeffs, tape=None):
    out = op(*inputs, tape)
    return ad.tensor_sum(ad.multiply(out, coeffs, tape), tape)


def finite_difference_grads(op, inputs, coeffs, h: float):
    """Central-difference gradient of the projected output w.r.t. each input."""
    grads = []
    for k, t in enumerate(inputs):
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = _loss_through(op, inputs, coeffs).item()
            flat[i] = orig - h
            lo = _loss_through(op, inputs, coeffs).item()
            flat[i] = orig
            gf[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def analytic_grads(op, inputs, coeffs):
    tape = Tape()
    loss = _loss_through(op, inputs, coeffs, tape)
    tape.backward(loss)
    return [tape.grad(t) for t in inputs]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def _mk(rng, shape, dtype, scale=1.0):
    return Tensor(rng.uniform(-scale, scale, size=shape).astype(dtype))


def _mk_unit(rng, shape, dtype):
    return Tensor(rng.uniform(0.05, 0.95, size=shape).astype(dtype))


def _primitive_cases(rng, dtype):
    """name -> (op(*inputs, tape), inputs) on small random instances."""
    return {
        "conv2d": (
            lambda x, w, b, tape=None: convops.conv2d(x, w, b, (2, 2), (1, 1), tape),
            [_mk(rng, (2, 2, 6, 6), dtype), _mk(rng, (3, 2, 4, 4), dtype), _mk(rng, (3,), dtype)],
        ),
        "deconv2d": (
            lambda x, w, b, tape=None: convops.deconv2d(x, w, b, (2, 2), (1, 1), tape),
            [_mk(rng, (2, 3, 3, 3), dtype), _mk(rng, (3, 2, 4, 4), dtype), _mk(rng, (2,), dtype)],
        ),
        "temporal_conv": (
            lambda x, w, b, tape=None: convops.temporal_conv(x, w, b, 2, 1, tape),
            [_mk(rng, (1, 3, 8, 2, 2), dtype), _mk(rng, (4, 3, 4), dtype), _mk(rng, (4,), dtype)],
        ),
        "temporal_deconv": (
            lambda x, w, b, tape=None: convops.temporal_deconv(x, w, b, 2, 1, tape),
            [_mk(rng, (1, 3, 4, 2, 2), dtype), _mk(rng, (3, 4, 4), dtype), _mk(rng, (4,), dtype)],
        ),
        "per_location_linear": (
            lambda x, w, b, tape=None: convops.per_location_linear(x, w, b, tape),
            [_mk(rng, (2, 3, 3, 3), dtype), _mk(rng, (4, 3), dtype), _mk(rng, (4,), dtype)],
        ),
        "relu": (
            lambda x, tape=None: ad.relu(x, tape),
            [_mk(rng, (4, 5), dtype)],
        ),
        "sigmoid": (
            lambda x, tape=None: ad.sigmoid(x, tape),
            [_mk(rng, (4, 5), dtype, scale=3.0)],
        ),
        "bce_loss": (
            lambda p, t, tape=None: ad.bce_loss(p, t, tape),
            [_mk_unit(rng, (3, 4), dtype), _mk_unit(rng, (3, 4), dtype)],
        ),
        "mse_loss": (
            lambda p, t, tape=None: ad.mse_loss(p, t, tape),
            [_mk(rng, (3, 4), dtype), _mk(rng, (3, 4), dtype)],
        ),
    }


def gradient_checks(n_instances: int = 3, seed: int = 0, h: float = 1e-6,
                    tol: float = 1e-6, dtype=np.float64):
    """Finite-difference gradient checks; returns (name, max_error, passed) rows.

    Analytic gradients are computed in ``dtype``; the finite-difference
    oracle always runs in float64 so it stays an order of magnitude more
    accurate than what it judges.
    """
    results = []
    for k in range(n_instances):
        rng = np.random.default_rng(seed + k)
        for name, (op, inputs) in _primitive_cases(rng, dtype).items():
            coeffs = Tensor(rng.standard_normal(op(*inputs).shape).astype(dtype))
            ana = analytic_grads(op, inputs, coeffs)
            inputs64 = [Tensor(t.data.astype(np.float64)) for t in inputs]
            coeffs64 = Tensor(coeffs.data.astype(np.float64))
            fd = finite_difference_grads(op, inputs64, coeffs64, h)
            err = max(relative_error(a.astype(np.float64), f)
                      for a, f in zip(ana, fd))
            results.append((f"grad {name} [{k}]", err, err < tol))
    return results


def shape_checks():
    """Verify the documented layer-by-layer output extents for batch 1 and 16."""
    results = []
    model = DensityForecastModel(latent_dim=16, seed=0)
    for n in (1, 16):
        x = Tensor(np.random.default_rng(1).uniform(0, 1, (n, 1, MAP_SIZE, MAP_SIZE))
                   .astype(np.float32))
        f1 = ad.relu(model.encoder.conv1(x))
        f2 = ad.relu(model.encoder.conv2(f1))
        f3 = ad.relu(model.encoder.conv3(f2))
        z = model.proj(f3)
        stages = [
            (f"encode conv1 (batch {n})", f1.shape, (n, 32, 40, 40)),
            (f"encode conv2 (batch {n})", f2.shape, (n, 64, 20, 20)),
            (f"encode conv3 (batch {n})", f3.shape, (n, 64, 10, 10)),
            (f"encode head (batch {n})", z.shape, (n, 16, LATENT_GRID, LATENT_GRID)),
        ]
        zb = Tensor(np.random.default_rng(2).standard_normal(
            (n, 16, T_IN, LATENT_GRID, LATENT_GRID)).astype(np.float32))
        t1 = ad.relu(model.forecaster.conv1(zb))
        t2 = ad.relu(model.forecaster.conv2(t1))
        t3 = ad.relu(model.forecaster.conv3(t2))
        d1 = ad.relu(model.forecaster.deconv1(t3))
        d2 = ad.relu(model.forecaster.deconv2(d1))
        d3 = ad.relu(model.forecaster.deconv3(d2))
        stages += [
            (f"forecast conv1 (batch {n})", t1.shape, (n, 64, 4, 10, 10)),
            (f"forecast conv2 (batch {n})", t2.shape, (n, 128, 2, 10, 10)),
            (f"forecast conv3 (batch {n})", t3.shape, (n, 256, 1, 10, 10)),
            (f"forecast deconv1 (batch {n})", d1.shape, (n, 128, 3, 10, 10)),
            (f"forecast deconv2 (batch {n})", d2.shape, (n, 64, 6, 10, 10)),
            (f"forecast deconv3 (batch {n})", d3.shape, (n, 16, T_OUT, 10, 10)),
        ]
        dec = model.decode(z)
        stages.append((f"decode (batch {n})", dec.shape, (n, 1, MAP_SIZE, MAP_SIZE)))
        for name, actual, expected in stages:
            results.append((name, actual, tuple(actual) == tuple(expected)))
    return results


def run_selftest(print_fn=print) -> bool:
    """Run all checks, print one line per check, return True iff all passed."""
    ok = True
    for name, err, passed in gradient_checks():
        ok &= passed
        print_fn(f"{'ok  ' if passed else 'FAIL'} {name} rel_err={err:.3e}")
    for name, shape, passed in shape_checks():
        ok &= passed
        print_fn(f"{'ok  ' if passed else 'FAIL'} shape {name} -> {tuple(shape)}")
    return ok
