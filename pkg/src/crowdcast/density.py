"""Density maps: rasterization, smoothing, resizing, transforms, and file I/O.

A density map is a float32 array of shape (H, W) with values in [0, 1];
array index [row, col] corresponds to map coordinate (x=col, y=row) with
cell centers at integer coordinates. A sequence stacks frames as (T, H, W).
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import AnnotationBoundsError, FileFormatError

CDMF_MAGIC = b"CDMF"
CDMF_VERSION = 1


@dataclass(frozen=True)
class AnnotationRecord:
    frame: int
    person_id: int
    x: float
    y: float


@dataclass
class AnnotationStream:
    """Per-frame pedestrian point annotations, one record per (frame, id)."""

    records: list[AnnotationRecord] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.records:
            key = (r.frame, r.person_id)
            if key in seen:
                raise ValueError(f"duplicate annotation for frame={r.frame} id={r.person_id}")
            seen.add(key)

    def __len__(self):
        return len(self.records)

    def n_frames(self) -> int:
        return max((r.frame for r in self.records), default=-1) + 1

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "id", "x", "y"])
            for r in self.records:
                writer.writerow([r.frame, r.person_id, repr(r.x), repr(r.y)])

    @classmethod
    def read_csv(cls, path) -> "AnnotationStream":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["frame", "id", "x", "y"]:
                raise FileFormatError(f"{path}: expected header 'frame,id,x,y', got {header}")
            records = []
            for row in reader:
                if not row:
                    continue
                frame, pid = int(row[0]), int(row[1])
                if frame < 0 or pid < 0:
                    raise FileFormatError(f"{path}: negative frame or id in row {row}")
                records.append(AnnotationRecord(frame, pid, float(row[2]), float(row[3])))
        return cls(records)


@dataclass
class DensitySequence:
    """An ordered stack of same-size density maps plus frame-rate metadata."""

    frames: np.ndarray  # (T, H, W) float32 in [0, 1]
    frame_rate: float = 1.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValueError(f"frames must be a non-empty (T, H, W) stack, got {self.frames.shape}")

    def __len__(self):
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


def rasterize(ann: AnnotationStream, width: int, height: int, n_frames: int,
              frame_rate: float = 1.0) -> DensitySequence:
    """Deposit a unit impulse at the nearest cell of each annotation.

    Colliding impulses saturate at 1.0 so values stay in [0, 1]; frames with
    no annotations are all-zero.
    """
    frames = np.zeros((n_frames, height, width), dtype=np.float32)
    for r in ann.records:
        if not (0 <= r.x < width and 0 <= r.y < height):
            raise AnnotationBoundsError(r.frame, r.person_id, r.x, r.y, width, height)
        if r.frame >= n_frames:
            continue
        col = min(int(round(r.x)), width - 1)
        row = min(int(round(r.y)), height - 1)
        frames[r.frame, row, col] = 1.0
    return DensitySequence(frames, frame_rate)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Truncated (radius ceil(3*sigma)), unit-sum 1-D Gaussian kernel."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def smooth_spatiotemporal(seq: DensitySequence, sigma: float) -> DensitySequence:
    """Separable 3-D Gaussian smoothing over (t, y, x) with zero padding.

    The same sigma is used on all three axes; outputs are clamped to [0, 1].
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    out = seq.frames.astype(np.float64)
    for axis in range(3):
        out = gaussian_filter1d(out, sigma, axis=axis, mode="constant", radius=radius)
    np.clip(out, 0.0, 1.0, out=out)
    return DensitySequence(out.astype(np.float32), seq.frame_rate)


def smooth_spatial(frames: np.ndarray, sigma: float) -> np.ndarray:
    """Per-frame 2-D Gaussian smoothing, same kernel policy as spatiotemporal."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    out = np.asarray(frames, dtype=np.float64)
    for axis in (-2, -1):
        out = gaussian_filter1d(out, sigma, axis=axis, mode="constant", radius=radius)
    np.clip(out, 0.0, 1.0, out=out)
    return out.astype(np.float32)


def resize_area(density_map: np.ndarray, new_width: int, new_height: int) -> np.ndarray:
    """Area-weighted average resampling of a single (H, W) map."""
    if new_width < 1 or new_height < 1:
        raise ValueError("target extents must be >= 1")
    m = np.asarray(density_map, dtype=np.float64)
    h, w = m.shape
    rows = _overlap_matrix(h, new_height)
    cols = _overlap_matrix(w, new_width)
    return (rows @ m @ cols.T).astype(np.float32)


def _overlap_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) matrix of normalized interval overlaps."""
    scale = n_src / n_dst
    mat = np.zeros((n_dst, n_src), dtype=np.float64)
    for i in range(n_dst):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(math.floor(lo)), min(int(math.ceil(hi)), n_src)
        for j in range(j0, j1):
            mat[i, j] = min(hi, j + 1) - max(lo, j)
    return mat / scale


def sqrt_transform(seq: DensitySequence) -> DensitySequence:
    return DensitySequence(np.sqrt(seq.frames), seq.frame_rate)


def square_transform(seq: DensitySequence) -> DensitySequence:
    return DensitySequence(np.square(seq.frames), seq.frame_rate)


def write_sequence(seq: DensitySequence, path) -> None:
    """Write the binary sequence format (magic CDMF, little-endian header)."""
    t, h, w = seq.frames.shape
    header = CDMF_MAGIC + struct.pack(
        "<5I", CDMF_VERSION, w, h, t, int(round(seq.frame_rate * 1000.0))
    )
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_sequence(path) -> DensitySequence:
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise FileFormatError(f"{path}: truncated header")
    if raw[:4] != CDMF_MAGIC:
        raise FileFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, w, h, t, rate_mhz = struct.unpack("<5I", raw[4:24])
    if version != CDMF_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if w < 1 or h < 1 or t < 1 or t * h * w > 1 << 30:
        raise FileFormatError(f"{path}: bad extents W={w} H={h} T={t}")
    expected = 24 + 4 * t * h * w
    if len(raw) < expected:
        raise FileFormatError(
            f"{path}: payload truncated (need {expected} bytes, have {len(raw)})"
        )
    frames = np.frombuffer(raw[24:expected], dtype="<f4").reshape(t, h, w)
    return DensitySequence(frames.copy(), rate_mhz / 1000.0)
