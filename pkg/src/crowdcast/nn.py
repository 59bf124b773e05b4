"""Parameterized layers and the Adam optimizer.

Weights are initialized from a seeded ``numpy.random.Generator`` with
uniform(-a, a), a = sqrt(1 / fan_in); biases start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import convops
from .autodiff import Tape, Tensor
from .errors import ShapeMismatchError


def _init_weight(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    a = float(np.sqrt(1.0 / fan_in))
    return Tensor(rng.uniform(-a, a, size=shape).astype(np.float32))


class Conv2d:
    def __init__(self, in_channels, out_channels, kernel=(4, 4), stride=(2, 2),
                 padding=(1, 1), rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        kh, kw = kernel
        self.stride = stride
        self.padding = padding
        self.weight = _init_weight(rng, (out_channels, in_channels, kh, kw),
                                   in_channels * kh * kw)
        self.bias = Tensor.zeros(out_channels)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        return convops.conv2d(x, self.weight, self.bias, self.stride, self.padding, tape)

    def parameters(self):
        return [self.weight, self.bias]


class Deconv2d:
    def __init__(self, in_channels, out_channels, kernel=(4, 4), stride=(2, 2),
                 padding=(1, 1), rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        kh, kw = kernel
        self.stride = stride
        self.padding = padding
        self.weight = _init_weight(rng, (in_channels, out_channels, kh, kw),
                                   in_channels * kh * kw)
        self.bias = Tensor.zeros(out_channels)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        return convops.deconv2d(x, self.weight, self.bias, self.stride, self.padding, tape)

    def parameters(self):
        return [self.weight, self.bias]


class TemporalConv:
    def __init__(self, in_channels, out_channels, kernel=4, stride=2, padding=1,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        self.weight = _init_weight(rng, (out_channels, in_channels, kernel),
                                   in_channels * kernel)
        self.bias = Tensor.zeros(out_channels)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        return convops.temporal_conv(x, self.weight, self.bias, self.stride, self.padding, tape)

    def parameters(self):
        return [self.weight, self.bias]


class TemporalDeconv:
    def __init__(self, in_channels, out_channels, kernel=4, stride=2, padding=1,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        self.weight = _init_weight(rng, (in_channels, out_channels, kernel),
                                   in_channels * kernel)
        self.bias = Tensor.zeros(out_channels)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        return convops.temporal_deconv(x, self.weight, self.bias, self.stride, self.padding, tape)

    def parameters(self):
        return [self.weight, self.bias]


class PerLocationLinear:
    def __init__(self, in_channels, out_channels, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.weight = _init_weight(rng, (out_channels, in_channels), in_channels)
        self.bias = Tensor.zeros(out_channels)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        return convops.per_location_linear(x, self.weight, self.bias, tape)

    def parameters(self):
        return [self.weight, self.bias]


@dataclass
class AdamState:
    """Optimizer state; moment buffers mirror the parameter shapes."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate: float = 0.001) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params, grads, state: AdamState) -> None:
    """One in-place Adam update with bias-corrected moments."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatchError("adam params", len(state.m), len(params))
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatchError("adam gradient", p.shape, g.shape)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        p.data -= (state.learning_rate * mhat / (np.sqrt(vhat) + state.epsilon)).astype(
            p.dtype, copy=False
        )
