"""Tape-based reverse-mode autodiff over dense numpy arrays.

Only the primitives needed by the forecasting network are provided;
convolution-style primitives live in :mod:`crowdcast.convops`.

Values are float32 by default. Every primitive follows the dtype of its
inputs, so the same graph can be replayed in float64 for tight gradient
checks.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError

__all__ = [
    "Tensor",
    "Tape",
    "relu",
    "sigmoid",
    "multiply",
    "add",
    "reshape",
    "transpose",
    "tensor_sum",
    "bce_loss",
    "mse_loss",
]


class Tensor:
    """A dense N-D array of 32-bit (or, for verification, 64-bit) floats."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    @classmethod
    def zeros(cls, shape, dtype=np.float32) -> "Tensor":
        return cls(np.zeros(shape, dtype=dtype))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Tape:
    """Records primitive applications so a scalar output can be differentiated.

    Backward walks the records in strict reverse order of recording, which is
    a reverse topological order of the computation. Gradients of nodes the
    backward sweep never reaches are exactly zero.
    """

    def __init__(self):
        self._records = []  # (out, inputs, vjp); holds refs so ids stay unique
        self._produced = set()
        self._grads = {}

    def record(self, out: Tensor, inputs, vjp) -> None:
        self._records.append((out, inputs, vjp))
        self._produced.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Accumulate gradients of ``loss`` w.r.t. every recorded input."""
        if id(loss) not in self._produced:
            raise ValueError("backward() called on a tensor not produced on this tape")
        if loss.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
        self._grads = {id(loss): np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self._records):
            g = self._grads.get(id(out))
            if g is None:
                continue
            for t, gi in zip(inputs, vjp(g)):
                if gi is None:
                    continue
                acc = self._grads.get(id(t))
                if acc is None:
                    self._grads[id(t)] = np.array(gi, copy=True)
                else:
                    acc += gi

    def grad(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        if g is None:
            return np.zeros_like(t.data)
        return g


def _require_same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        for ax, (ea, eb) in enumerate(zip(a.shape, b.shape)):
            if ea != eb:
                raise ShapeMismatchError(f"{what}[{ax}]", ea, eb)
        raise ShapeMismatchError(what, a.shape, b.shape)


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    if tape is not None:
        mask = x.data > 0
        tape.record(out, (x,), lambda g: (g * mask,))
    return out


def _sigmoid_stable(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    # keep output strictly inside (0, 1) even where float rounding saturates
    fi = np.finfo(v.dtype)
    np.clip(out, fi.tiny, 1.0 - fi.epsneg, out=out)
    return out


def sigmoid(x: Tensor, tape: Tape | None = None) -> Tensor:
    s = _sigmoid_stable(x.data)
    out = Tensor(s)
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * s * (1.0 - s),))
    return out


def multiply(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _require_same_shape(a, b, "multiply")
    out = Tensor(a.data * b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g * b.data, g * a.data))
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g, g))
    return out


def reshape(x: Tensor, shape, tape: Tape | None = None) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    if tape is not None:
        orig = x.shape
        tape.record(out, (x,), lambda g: (g.reshape(orig),))
    return out


def transpose(x: Tensor, axes, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)))
    if tape is not None:
        inv = np.argsort(axes)
        tape.record(out, (x,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))
    return out


def tensor_sum(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype))
    if tape is not None:
        shape = x.shape
        tape.record(out, (x,), lambda g: (np.broadcast_to(g, shape).astype(x.dtype),))
    return out


def bce_loss(prediction: Tensor, target: Tensor, tape: Tape | None = None) -> Tensor:
    """Mean binary cross-entropy; predictions must be strictly inside (0, 1)."""
    _require_same_shape(prediction, target, "bce")
    p = prediction.data
    t = target.data
    if not ((p > 0.0).all() and (p < 1.0).all()):
        raise ValueError("bce_loss: predictions must lie strictly inside (0, 1)")
    n = p.size
    out = Tensor(np.asarray(-(t * np.log(p) + (1.0 - t) * np.log1p(-p)).mean(), dtype=p.dtype))
    if tape is not None:

        def vjp(g):
            gp = g * (p - t) / (p * (1.0 - p) * n)
            gt = g * (np.log1p(-p) - np.log(p)) / n
            return gp, gt

        tape.record(out, (prediction, target), vjp)
    return out


def mse_loss(prediction: Tensor, target: Tensor, tape: Tape | None = None) -> Tensor:
    """Mean squared error over all elements."""
    _require_same_shape(prediction, target, "mse")
    diff = prediction.data - target.data
    n = diff.size
    out = Tensor(np.asarray((diff * diff).mean(), dtype=diff.dtype))
    if tape is not None:

        def vjp(g):
            gd = g * 2.0 * diff / n
            return gd, -gd

        tape.record(out, (prediction, target), vjp)
    return out
