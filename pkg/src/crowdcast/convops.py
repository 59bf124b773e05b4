"""Convolution-style differentiable primitives.

All 2-D convolutions are cross-correlations (no kernel flip) over NCHW
inputs, implemented with slice-based im2col/col2im so the heavy lifting is a
single batched matmul. Temporal primitives act on NCTHW inputs along T only;
every spatial location is an independent row of the underlying matmul, so
cross-location independence is structural, not approximate.

Weight layouts follow the usual deep-learning convention:
  conv2d          (out_ch, in_ch, kh, kw)
  deconv2d        (in_ch, out_ch, kh, kw)
  temporal_conv   (out_ch, in_ch, kt)
  temporal_deconv (in_ch, out_ch, kt)
  per_location_linear (out_ch, in_ch)
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor
from .errors import ShapeMismatchError

__all__ = [
    "conv2d",
    "deconv2d",
    "temporal_conv",
    "temporal_deconv",
    "per_location_linear",
    "conv2d_output_size",
    "deconv2d_output_size",
]


def conv2d_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def deconv2d_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride + kernel - 2 * padding


def _im2col(x: np.ndarray, kh, kw, sh, sw, ph, pw):
    """(N, C, H, W) -> (N, C*kh*kw, Ho*Wo) patch matrix."""
    n, c, h, w = x.shape
    ho = conv2d_output_size(h, kh, sh, ph)
    wo = conv2d_output_size(w, kw, sw, pw)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw]
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo


def _col2im(cols: np.ndarray, n, c, h, w, kh, kw, sh, sw, ph, pw):
    """Adjoint of :func:`_im2col`; scatters patch columns back to an image."""
    ho = conv2d_output_size(h, kh, sh, ph)
    wo = conv2d_output_size(w, kw, sw, pw)
    cols6 = cols.reshape(n, c, kh, kw, ho, wo)
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += cols6[:, :, i, j]
    return xp[:, :, ph : ph + h, pw : pw + w]


def _gemm_accum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(N, A, P) x (N, B, P) -> (A, B), contracting N and P via one BLAS call."""
    na, aa, _ = a.shape
    _, bb, _ = b.shape
    a2 = np.ascontiguousarray(a.transpose(1, 0, 2)).reshape(aa, -1)
    b2 = np.ascontiguousarray(b.transpose(1, 0, 2)).reshape(bb, -1)
    return a2 @ b2.T


def _check_axis(name: str, expected, actual):
    if expected != actual:
        raise ShapeMismatchError(name, expected, actual)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: tuple[int, int],
    padding: tuple[int, int],
    tape: Tape | None = None,
) -> Tensor:
    if x.ndim != 4:
        raise ShapeMismatchError("conv2d input ndim", 4, x.ndim)
    co, ci, kh, kw = weight.shape
    _check_axis("conv2d input channels", ci, x.shape[1])
    _check_axis("conv2d bias channels", co, bias.shape[0])
    sh, sw = stride
    ph, pw = padding
    n, _, h, w = x.shape
    if conv2d_output_size(h, kh, sh, ph) < 1 or conv2d_output_size(w, kw, sw, pw) < 1:
        raise ShapeMismatchError("conv2d spatial extent", f">= kernel {kh}x{kw}", (h, w))

    cols, ho, wo = _im2col(x.data, kh, kw, sh, sw, ph, pw)
    wmat = weight.data.reshape(co, ci * kh * kw)
    out_flat = np.matmul(wmat, cols) + bias.data[:, None]
    out = Tensor(out_flat.reshape(n, co, ho, wo))

    if tape is not None:

        def vjp(g):
            gf = g.reshape(n, co, ho * wo)
            gw = _gemm_accum(gf, cols).reshape(weight.shape)
            gb = gf.sum(axis=(0, 2))
            gcols = np.matmul(wmat.T, gf)
            gx = _col2im(gcols, n, ci, h, w, kh, kw, sh, sw, ph, pw)
            return gx, gw, gb

        tape.record(out, (x, weight, bias), vjp)
    return out


def deconv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: tuple[int, int],
    padding: tuple[int, int],
    tape: Tape | None = None,
) -> Tensor:
    if x.ndim != 4:
        raise ShapeMismatchError("deconv2d input ndim", 4, x.ndim)
    ci, co, kh, kw = weight.shape
    _check_axis("deconv2d input channels", ci, x.shape[1])
    _check_axis("deconv2d bias channels", co, bias.shape[0])
    sh, sw = stride
    ph, pw = padding
    n, _, h, w = x.shape
    ho = deconv2d_output_size(h, kh, sh, ph)
    wo = deconv2d_output_size(w, kw, sw, pw)
    if ho < 1 or wo < 1:
        raise ShapeMismatchError("deconv2d output extent", ">= 1", (ho, wo))

    wmat = weight.data.reshape(ci, co * kh * kw)
    x_flat = x.data.reshape(n, ci, h * w)
    cols = np.matmul(wmat.T, x_flat)
    out = _col2im(cols, n, co, ho, wo, kh, kw, sh, sw, ph, pw)
    out = Tensor(out + bias.data[None, :, None, None])

    if tape is not None:

        def vjp(g):
            gcols, _, _ = _im2col(g, kh, kw, sh, sw, ph, pw)
            gx = np.matmul(wmat, gcols).reshape(n, ci, h, w)
            gw = _gemm_accum(x_flat, gcols).reshape(weight.shape)
            gb = g.sum(axis=(0, 2, 3))
            return gx, gw, gb

        tape.record(out, (x, weight, bias), vjp)
    return out


def _im2col1d(x: np.ndarray, kt, st, pt):
    """(M, C, T) -> (M, C*kt, To) patch matrix along the last axis."""
    m, c, t = x.shape
    to = conv2d_output_size(t, kt, st, pt)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt)))
    cols = np.empty((m, c, kt, to), dtype=x.dtype)
    for i in range(kt):
        cols[:, :, i] = xp[:, :, i : i + st * to : st]
    return cols.reshape(m, c * kt, to), to


def _col2im1d(cols: np.ndarray, m, c, t, kt, st, pt):
    to = conv2d_output_size(t, kt, st, pt)
    cols4 = cols.reshape(m, c, kt, to)
    xp = np.zeros((m, c, t + 2 * pt), dtype=cols.dtype)
    for i in range(kt):
        xp[:, :, i : i + st * to : st] += cols4[:, :, i]
    return xp[:, :, pt : pt + t]


def _to_rows(x: np.ndarray):
    """(N, C, T, H, W) -> (N*H*W, C, T), spatial locations as batch rows."""
    n, c, t, h, w = x.shape
    return np.ascontiguousarray(x.transpose(0, 3, 4, 1, 2)).reshape(n * h * w, c, t)

def _from_rows(rows: np.ndarray, n, h, w):
    m, c, t = rows.shape
    return np.ascontiguousarray(rows.reshape(n, h, w, c, t).transpose(0, 3, 4, 1, 2))


def temporal_conv(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int,
    padding: int,
    tape: Tape | None = None,
) -> Tensor:
    """Convolution along T of an (N, C, T, H, W) tensor; 1x1 spatially."""
    if x.ndim != 5:
        raise ShapeMismatchError("temporal_conv input ndim", 5, x.ndim)
    co, ci, kt = weight.shape
    _check_axis("temporal_conv input channels", ci, x.shape[1])
    _check_axis("temporal_conv bias channels", co, bias.shape[0])
    n, _, t, h, w = x.shape
    if conv2d_output_size(t, kt, stride, padding) < 1:
        raise ShapeMismatchError("temporal_conv temporal extent", f">= kernel {kt}", t)

    rows = _to_rows(x.data)
    cols, to = _im2col1d(rows, kt, stride, padding)
    wmat = weight.data.reshape(co, ci * kt)
    out_rows = np.matmul(wmat, cols) + bias.data[:, None]
    out = Tensor(_from_rows(out_rows, n, h, w))

    if tape is not None:

        def vjp(g):
            grows = _to_rows(g)
            gw = _gemm_accum(grows, cols).reshape(weight.shape)
            gb = grows.sum(axis=(0, 2))
            gcols = np.matmul(wmat.T, grows)
            gx_rows = _col2im1d(gcols, rows.shape[0], ci, t, kt, stride, padding)
            return _from_rows(gx_rows, n, h, w), gw, gb

        tape.record(out, (x, weight, bias), vjp)
    return out


def temporal_deconv(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int,
    padding: int,
    tape: Tape | None = None,
) -> Tensor:
    """Transposed convolution along T of an (N, C, T, H, W) tensor."""
    if x.ndim != 5:
        raise ShapeMismatchError("temporal_deconv input ndim", 5, x.ndim)
    ci, co, kt = weight.shape
    _check_axis("temporal_deconv input channels", ci, x.shape[1])
    _check_axis("temporal_deconv bias channels", co, bias.shape[0])
    n, _, t, h, w = x.shape
    to = deconv2d_output_size(t, kt, stride, padding)
    if to < 1:
        raise ShapeMismatchError("temporal_deconv output extent", ">= 1", to)

    rows = _to_rows(x.data)
    m = rows.shape[0]
    wmat = weight.data.reshape(ci, co * kt)
    cols = np.matmul(wmat.T, rows)
    out_rows = _col2im1d(cols, m, co, to, kt, stride, padding)
    out = Tensor(_from_rows(out_rows, n, h, w) + bias.data[None, :, None, None, None])

    if tape is not None:

        def vjp(g):
            grows = _to_rows(g)
            gcols, _ = _im2col1d(grows, kt, stride, padding)
            gx_rows = np.matmul(wmat, gcols)
            gw = _gemm_accum(rows, gcols).reshape(weight.shape)
            gb = g.sum(axis=(0, 2, 3, 4))
            return _from_rows(gx_rows, n, h, w), gw, gb

        tape.record(out, (x, weight, bias), vjp)
    return out


def per_location_linear(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    tape: Tape | None = None,
) -> Tensor:
    """The same affine map applied at every spatial cell of an NCHW tensor."""
    if x.ndim != 4:
        raise ShapeMismatchError("per_location_linear input ndim", 4, x.ndim)
    co, ci = weight.shape
    _check_axis("per_location_linear input channels", ci, x.shape[1])
    _check_axis("per_location_linear bias channels", co, bias.shape[0])

    n, _, h, w = x.shape
    x_flat = x.data.reshape(n, ci, h * w)
    out_flat = np.matmul(weight.data, x_flat) + bias.data[:, None]
    out = Tensor(out_flat.reshape(n, co, h, w))

    if tape is not None:

        def vjp(g):
            gf = g.reshape(n, co, h * w)
            gw = _gemm_accum(gf, x_flat)
            gb = gf.sum(axis=(0, 2))
            gx = np.matmul(weight.data.T, gf).reshape(x.shape)
            return gx, gw, gb

        tape.record(out, (x, weight, bias), vjp)
    return out
