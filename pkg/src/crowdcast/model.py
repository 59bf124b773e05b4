"""The density forecasting network: frame encoder, latent temporal forecaster,
frame decoder, plus the whole-map (non-patch) ablation variant.

Fixed 80x80 frames; three stride-2 convolutions bring the latent grid to
10x10. The "patch" variant keeps a per-cell latent of ``latent_dim`` channels
(the encoder head is a per-location linear map, i.e. a 1x1 convolution, with
no activation). The "global" variant flattens the 10x10x64 feature volume
into a single vector before the temporal forecaster, whose latent grid is
then 1x1.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .density import DensitySequence
from .errors import FileFormatError, ShapeMismatchError
from .nn import Conv2d, Deconv2d, PerLocationLinear, TemporalConv, TemporalDeconv

MAP_SIZE = 80
LATENT_GRID = 10
T_IN = 8
T_OUT = 12
ENCODER_FEATURES = 64  # channels of the last encoder convolution

CKPT_MAGIC = b"CDFW"
CKPT_VERSION = 1


class _Encoder:
    """conv(1->32) -> conv(32->64) -> conv(64->64), each 4x4/s2/p1 + ReLU."""

    def __init__(self, rng):
        self.conv1 = Conv2d(1, 32, rng=rng)
        self.conv2 = Conv2d(32, 64, rng=rng)
        self.conv3 = Conv2d(64, ENCODER_FEATURES, rng=rng)

    def features(self, x: Tensor, tape=None) -> Tensor:
        x = ad.relu(self.conv1(x, tape), tape)
        x = ad.relu(self.conv2(x, tape), tape)
        return ad.relu(self.conv3(x, tape), tape)

    def named_parameters(self):
        return {
            "encoder.0.weight": self.conv1.weight, "encoder.0.bias": self.conv1.bias,
            "encoder.1.weight": self.conv2.weight, "encoder.1.bias": self.conv2.bias,
            "encoder.2.weight": self.conv3.weight, "encoder.2.bias": self.conv3.bias,
        }


class _Forecaster:
    """Temporal conv stack 8 -> 4 -> 2 -> 1, deconv stack 1 -> 3 -> 6 -> 12."""

    def __init__(self, latent_dim, rng):
        self.conv1 = TemporalConv(latent_dim, 64, kernel=4, stride=2, padding=1, rng=rng)
        self.conv2 = TemporalConv(64, 128, kernel=4, stride=2, padding=1, rng=rng)
        self.conv3 = TemporalConv(128, 256, kernel=2, stride=1, padding=0, rng=rng)
        self.deconv1 = TemporalDeconv(256, 128, kernel=3, stride=1, padding=0, rng=rng)
        self.deconv2 = TemporalDeconv(128, 64, kernel=4, stride=2, padding=1, rng=rng)
        self.deconv3 = TemporalDeconv(64, latent_dim, kernel=4, stride=2, padding=1, rng=rng)

    def __call__(self, z: Tensor, tape=None) -> Tensor:
        z = ad.relu(self.conv1(z, tape), tape)
        z = ad.relu(self.conv2(z, tape), tape)
        z = ad.relu(self.conv3(z, tape), tape)
        z = ad.relu(self.deconv1(z, tape), tape)
        z = ad.relu(self.deconv2(z, tape), tape)
        return ad.relu(self.deconv3(z, tape), tape)

    def named_parameters(self):
        layers = [self.conv1, self.conv2, self.conv3, self.deconv1, self.deconv2, self.deconv3]
        out = {}
        for i, layer in enumerate(layers):
            out[f"forecaster.{i}.weight"] = layer.weight
            out[f"forecaster.{i}.bias"] = layer.bias
        return out


class DensityForecastModel:
    """Full forecasting network (encoder, latent forecaster, decoder)."""

    def __init__(self, latent_dim: int | None = None, seed: int = 0, variant: str = "patch"):
        if variant not in ("patch", "global"):
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.latent_dim = latent_dim if latent_dim is not None else (16 if variant == "patch" else 128)
        rng = np.random.default_rng(seed)
        self.encoder = _Encoder(rng)
        flat = ENCODER_FEATURES * LATENT_GRID * LATENT_GRID
        if variant == "patch":
            self.proj = PerLocationLinear(ENCODER_FEATURES, self.latent_dim, rng=rng)
            self.unproj = None
        else:
            # whole-map bottleneck: flatten the 10x10x64 volume to one vector
            self.proj = PerLocationLinear(flat, self.latent_dim, rng=rng)
            self.unproj = PerLocationLinear(self.latent_dim, flat, rng=rng)
        self.forecaster = _Forecaster(self.latent_dim, rng)
        dec_in = self.latent_dim if variant == "patch" else ENCODER_FEATURES
        dec_mid = 32 if variant == "patch" else 64
        self.deconv1 = Deconv2d(dec_in, dec_mid, rng=rng)
        self.deconv2 = Deconv2d(dec_mid, 32, rng=rng)
        self.deconv3 = Deconv2d(32, 1, rng=rng)

    # -- forward pieces -----------------------------------------------------

    def encode(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        """(N, 1, 80, 80) sqrt-transformed maps -> (N, K, G, G) latent grid."""
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeMismatchError("encode input channels", 1, x.shape[1:2])
        if x.shape[2] != MAP_SIZE or x.shape[3] != MAP_SIZE:
            raise ShapeMismatchError("encode input extent", MAP_SIZE, x.shape[2:])
        feat = self.encoder.features(x, tape)
        if self.variant == "patch":
            return self.proj(feat, tape)
        n = x.shape[0]
        flat = ad.reshape(feat, (n, ENCODER_FEATURES * LATENT_GRID * LATENT_GRID, 1, 1), tape)
        return self.proj(flat, tape)

    def decode(self, z: Tensor, tape: Tape | None = None) -> Tensor:
        """(N, K, G, G) latent grid -> (N, 1, 80, 80) maps in (0, 1)."""
        grid = LATENT_GRID if self.variant == "patch" else 1
        if z.ndim != 4 or z.shape[1] != self.latent_dim:
            raise ShapeMismatchError("decode latent channels", self.latent_dim, z.shape[1:2])
        if z.shape[2] != grid or z.shape[3] != grid:
            raise ShapeMismatchError("decode latent grid", grid, z.shape[2:])
        if self.variant == "global":
            n = z.shape[0]
            z = self.unproj(z, tape)
            z = ad.reshape(z, (n, ENCODER_FEATURES, LATENT_GRID, LATENT_GRID), tape)
        z = ad.relu(self.deconv1(z, tape), tape)
        z = ad.relu(self.deconv2(z, tape), tape)
        return ad.sigmoid(self.deconv3(z, tape), tape)

    def forecast_latent(self, z_in: Tensor, tape: Tape | None = None) -> Tensor:
        """(N, K, 8, G, G) latent history -> (N, K, 12, G, G) latent future."""
        if z_in.ndim != 5:
            raise ShapeMismatchError("forecast_latent ndim", 5, z_in.ndim)
        if z_in.shape[2] != T_IN:
            raise ShapeMismatchError("forecast_latent temporal length", T_IN, z_in.shape[2])
        return self.forecaster(z_in, tape)

    def forecast(self, c_in: DensitySequence) -> DensitySequence:
        """Full pipeline: sqrt -> encode -> latent forecast -> decode -> square."""
        if len(c_in) != T_IN:
            raise ShapeMismatchError("forecast input frames", T_IN, len(c_in))
        grid = LATENT_GRID if self.variant == "patch" else 1
        x = Tensor(np.sqrt(c_in.frames)[:, None])  # (T_in, 1, H, W)
        z = self.encode(x)  # (T_in, K, G, G)
        z_seq = Tensor(z.data.transpose(1, 0, 2, 3)[None])  # (1, K, T_in, G, G)
        z_out = self.forecast_latent(z_seq)  # (1, K, T_out, G, G)
        z_frames = Tensor(
            np.ascontiguousarray(z_out.data[0].transpose(1, 0, 2, 3)).reshape(
                T_OUT, self.latent_dim, grid, grid
            )
        )
        decoded = self.decode(z_frames)  # (T_out, 1, H, W)
        return DensitySequence(np.square(decoded.data[:, 0]), c_in.frame_rate)

    # -- parameter bookkeeping ----------------------------------------------

    def named_parameters(self) -> dict[str, Tensor]:
        out = dict(self.encoder.named_parameters())
        out["proj.weight"] = self.proj.weight
        out["proj.bias"] = self.proj.bias
        if self.unproj is not None:
            out["unproj.weight"] = self.unproj.weight
            out["unproj.bias"] = self.unproj.bias
        out.update(self.forecaster.named_parameters())
        for i, layer in enumerate([self.deconv1, self.deconv2, self.deconv3]):
            out[f"decoder.{i}.weight"] = layer.weight
            out[f"decoder.{i}.bias"] = layer.bias
        return out

    def autoencoder_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_parameters().items()
                if not k.startswith("forecaster.")}

    def forecaster_parameters(self) -> dict[str, Tensor]:
        return self.forecaster.named_parameters()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def zero_parameters(self) -> None:
        for p in self.named_parameters().values():
            p.data[...] = 0.0

    # -- checkpoint I/O ------------------------------------------------------

    def save(self, path) -> None:
        save_tensors(self.named_parameters(), path)

    def load(self, path) -> None:
        tensors = load_tensors(path)
        params = self.named_parameters()
        if set(tensors) != set(params):
            missing = sorted(set(params) - set(tensors))
            extra = sorted(set(tensors) - set(params))
            raise FileFormatError(
                f"{path}: checkpoint does not match model (missing {missing}, extra {extra})"
            )
        for name, arr in tensors.items():
            if params[name].shape != arr.shape:
                raise ShapeMismatchError(f"checkpoint tensor {name}", params[name].shape, arr.shape)
            params[name].data[...] = arr

    @classmethod
    def from_checkpoint(cls, path) -> "DensityForecastModel":
        """Build a model whose architecture matches the checkpoint and load it."""
        tensors = load_tensors(path)
        if "proj.weight" not in tensors:
            raise FileFormatError(f"{path}: not a model checkpoint (no proj.weight)")
        out_ch, in_ch = tensors["proj.weight"].shape
        variant = "patch" if in_ch == ENCODER_FEATURES else "global"
        model = cls(latent_dim=out_ch, variant=variant)
        model.load(path)
        return model


def save_tensors(tensors: dict[str, Tensor], path) -> None:
    chunks = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(tensors))]
    for name, t in tensors.items():
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<B", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CKPT_MAGIC:
        raise FileFormatError(f"{path}: bad checkpoint magic")
    version, count = struct.unpack("<II", raw[4:12])
    if version != CKPT_VERSION:
        raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, pos); pos += 2
            name = raw[pos : pos + nlen].decode("utf-8"); pos += nlen
            (ndim,) = struct.unpack_from("<B", raw, pos); pos += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, pos); pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(shape)
            pos += 4 * n
            out[name] = arr.copy()
    except (struct.error, ValueError) as exc:
        raise FileFormatError(f"{path}: truncated or corrupt checkpoint") from exc
    if pos != len(raw):
        raise FileFormatError(f"{path}: trailing bytes after tensor payload")
    return out
