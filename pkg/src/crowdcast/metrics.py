"""Divergence metrics between normalized density maps.

Maps are epsilon-floored and normalized to probability fields; divergences
use the natural logarithm. By default no 1/(W*H) prefactor is applied (so
the symmetric divergence is bounded by ln 2); passing ``prefactor=True``
scales every divergence by exactly 1/(W*H).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensitySequence, smooth_spatiotemporal
from .errors import ShapeMismatchError

DEFAULT_EPSILON = 1e-12


def normalize(density_map: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Add epsilon everywhere and divide by the total; all-zero maps become uniform."""
    m = np.asarray(density_map, dtype=np.float64)
    if (m < 0).any():
        raise ValueError("normalize: map contains negative values")
    m = m + epsilon
    return m / m.sum()


def _check_grids(g: np.ndarray, c: np.ndarray):
    if g.shape != c.shape:
        raise ShapeMismatchError("metric grid", g.shape, c.shape)


def kl_divergence(g: np.ndarray, c: np.ndarray, prefactor: bool = False) -> float:
    """sum g * ln(g/c); zero-mass cells of g contribute nothing."""
    _check_grids(g, c)
    mask = g > 0
    val = float(np.sum(g[mask] * np.log(g[mask] / c[mask])))
    if prefactor:
        val /= g.size
    return val


def inverse_kl(g: np.ndarray, c: np.ndarray, prefactor: bool = False) -> float:
    return kl_divergence(c, g, prefactor)


def js_divergence(g: np.ndarray, c: np.ndarray, prefactor: bool = False) -> float:
    _check_grids(g, c)
    m = 0.5 * (g + c)
    return 0.5 * (kl_divergence(g, m, prefactor) + kl_divergence(c, m, prefactor))


@dataclass
class MetricReport:
    """Per-frame divergences plus Average (mean over frames) and Final."""

    d_kl: np.ndarray
    d_ikl: np.ndarray
    d_js: np.ndarray

    @property
    def average(self) -> tuple[float, float, float]:
        return float(self.d_kl.mean()), float(self.d_ikl.mean()), float(self.d_js.mean())

    @property
    def final(self) -> tuple[float, float, float]:
        return float(self.d_kl[-1]), float(self.d_ikl[-1]), float(self.d_js[-1])

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("frame,d_kl,d_ikl,d_js\n")
            for i in range(len(self.d_kl)):
                fh.write(f"{i + 1},{float(self.d_kl[i])!r},"
                         f"{float(self.d_ikl[i])!r},{float(self.d_js[i])!r}\n")
            a = self.average
            f = self.final
            fh.write(f"average,{a[0]!r},{a[1]!r},{a[2]!r}\n")
            fh.write(f"final,{f[0]!r},{f[1]!r},{f[2]!r}\n")


def evaluate_sequence(
    pred: DensitySequence,
    gt: DensitySequence,
    sigma: float = 3.0,
    prefactor: bool = False,
    epsilon: float = DEFAULT_EPSILON,
) -> MetricReport:
    """Smooth both sequences spatiotemporally, then score frame by frame."""
    if len(pred) != len(gt):
        raise ShapeMismatchError("evaluated frame count", len(gt), len(pred))
    if pred.frames.shape[1:] != gt.frames.shape[1:]:
        raise ShapeMismatchError("evaluated grid", gt.frames.shape[1:], pred.frames.shape[1:])
    ps = smooth_spatiotemporal(pred, sigma).frames
    gs = smooth_spatiotemporal(gt, sigma).frames
    n = len(pred)
    d_kl = np.empty(n)
    d_ikl = np.empty(n)
    d_js = np.empty(n)
    for i in range(n):
        gbar = normalize(gs[i], epsilon)
        cbar = normalize(ps[i], epsilon)
        d_kl[i] = kl_divergence(gbar, cbar, prefactor)
        d_ikl[i] = inverse_kl(gbar, cbar, prefactor)
        d_js[i] = js_divergence(gbar, cbar, prefactor)
    return MetricReport(d_kl, d_ikl, d_js)
