"""Reference upsamplers used for equivalence checks and cost comparisons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (
    Conv2dLayer,
    Deconv2dLayer,
    LinearLayer,
    conv2d_backward,
    conv2d_forward,
    deconv2d_forward,
    linear_backward,
    linear_forward,
    softmax_channels,
    softmax_channels_backward,
)
from .tensor import Rng, check_tensor, pixel_shuffle, pixel_unshuffle

__all__ = [
    "nearest_upsample",
    "bilinear_upsample",
    "deconv_upsample",
    "pixelshuffle_upsample",
    "CarafeConfig",
    "CarafeWeights",
    "carafe_encoder",
    "carafe_encoder_backward",
    "carafe_kernels",
    "carafe_kernels_backward",
    "carafe_reassemble",
    "carafe_reassemble_backward",
    "carafe_upsample",
    "carafe_backward",
    "NearestUpsample",
    "BilinearUpsample",
    "DeconvUpsample",
    "PixelShuffleUpsample",
    "Carafe",
]


def _check_scale(s: int) -> int:
    s = int(s)
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    return s


def nearest_upsample(x: np.ndarray, s: int) -> np.ndarray:
    check_tensor(x)
    s = _check_scale(s)
    return np.repeat(np.repeat(x, s, axis=2), s, axis=3)


def _linear_taps(size: int, s: int):
    src = np.clip((np.arange(size * s) + 0.5) / s - 0.5, 0, size - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, size - 1)
    return lo, hi, src - lo


def bilinear_upsample(x: np.ndarray, s: int) -> np.ndarray:
    """Separable half-pixel bilinear upsampling with edge clamping."""
    check_tensor(x)
    s = _check_scale(s)
    _, _, h, w = x.shape
    lo, hi, f = _linear_taps(h, s)
    f = f.astype(x.dtype)[:, None]
    rows = x[:, :, lo, :] * (1 - f) + x[:, :, hi, :] * f
    lo, hi, f = _linear_taps(w, s)
    f = f.astype(x.dtype)
    return rows[:, :, :, lo] * (1 - f) + rows[:, :, :, hi] * f


def deconv_upsample(layer: Deconv2dLayer, x: np.ndarray) -> np.ndarray:
    return deconv2d_forward(layer, x)


def pixelshuffle_upsample(conv: Conv2dLayer, x: np.ndarray, s: int = 2) -> np.ndarray:
    """Convolve to s*s times the channels, then pixel-shuffle."""
    return pixel_shuffle(conv2d_forward(conv, x), s)


@dataclass(frozen=True)
class CarafeConfig:
    scale: int = 2
    k_up: int = 5
    k_enc: int = 3
    c_mid: int = 64

    def __post_init__(self):
        if self.k_up < 1 or self.k_up % 2 == 0 or self.k_enc < 1 or self.k_enc % 2 == 0:
            raise ValueError(f"kernel sizes must be odd and positive, got k_up={self.k_up}, k_enc={self.k_enc}")
        if self.c_mid < 1 or self.scale < 1:
            raise ValueError(f"c_mid and scale must be positive, got {self.c_mid}, {self.scale}")

    @property
    def kernel_channels(self) -> int:
        return self.scale * self.scale * self.k_up * self.k_up


@dataclass
class CarafeWeights:
    compressor: LinearLayer
    encoder: Conv2dLayer

    @classmethod
    def random(cls, cfg: CarafeConfig, channels: int, rng: Rng) -> "CarafeWeights":
        return cls(LinearLayer.random(channels, cfg.c_mid, rng.fork(0)),
                   Conv2dLayer.random(cfg.c_mid, cfg.kernel_channels, cfg.k_enc, rng.fork(1)))

    def validate(self, cfg: CarafeConfig) -> None:
        enc = self.encoder
        if self.compressor.c_out != cfg.c_mid or enc.weight.shape[1] != cfg.c_mid:
            raise ValueError(f"compressor/encoder widths do not match c_mid={cfg.c_mid}")
        if enc.weight.shape[0] != cfg.kernel_channels or enc.k != cfg.k_enc:
            raise ValueError(f"encoder must map to {cfg.kernel_channels} channels with a {cfg.k_enc}x{cfg.k_enc} kernel")
        if enc.stride != 1 or enc.padding != cfg.k_enc // 2:
            raise ValueError("encoder must be stride 1 with 'same' padding")

    def parameters(self) -> dict[str, np.ndarray]:
        params = {f"compressor.{k}": v for k, v in self.compressor.parameters().items()}
        params.update({f"encoder.{k}": v for k, v in self.encoder.parameters().items()})
        return params


def _encode(cfg: CarafeConfig, weights: CarafeWeights, x: np.ndarray):
    weights.validate(cfg)
    compressed = linear_forward(weights.compressor, x)
    return compressed, pixel_shuffle(conv2d_forward(weights.encoder, compressed), cfg.scale)


def carafe_encoder(cfg: CarafeConfig, weights: CarafeWeights, x: np.ndarray) -> np.ndarray:
    """Kernel logits of shape (n, k_up**2, s*h, s*w): compress, encode, shuffle."""
    return _encode(cfg, weights, x)[1]


def carafe_encoder_backward(cfg: CarafeConfig, weights: CarafeWeights, x: np.ndarray,
                            grad_logits: np.ndarray):
    """Backward of :func:`carafe_encoder`; returns (grad_x, grads)."""
    compressed = linear_forward(weights.compressor, x)
    grad_enc = pixel_unshuffle(grad_logits, cfg.scale)
    grad_c, gw_e, gb_e = conv2d_backward(weights.encoder, compressed, grad_enc)
    grad_x, gw_c, gb_c = linear_backward(weights.compressor, x, grad_c)
    grads = {"compressor.weight": gw_c, "encoder.weight": gw_e}
    if gb_c is not None:
        grads["compressor.bias"] = gb_c
    if gb_e is not None:
        grads["encoder.bias"] = gb_e
    return grad_x, grads


def carafe_kernels(cfg: CarafeConfig, weights: CarafeWeights, x: np.ndarray) -> np.ndarray:
    """Normalised reassembly kernels of shape (n, k_up**2, s*h, s*w)."""
    return softmax_channels(carafe_encoder(cfg, weights, x), cfg.k_up * cfg.k_up)


def carafe_kernels_backward(cfg: CarafeConfig, weights: CarafeWeights, x: np.ndarray,
                            grad_kernels: np.ndarray):
    """Backward of :func:`carafe_kernels`; returns (grad_x, grads)."""
    kernels = carafe_kernels(cfg, weights, x)
    grad_logits = softmax_channels_backward(kernels, grad_kernels, cfg.k_up * cfg.k_up)
    return carafe_encoder_backward(cfg, weights, x, grad_logits)


def _blocks(a: np.ndarray, s: int) -> np.ndarray:
    n, c, hs, ws = a.shape
    return a.reshape(n, c, hs // s, s, ws // s, s)


def carafe_reassemble(x: np.ndarray, kernels: np.ndarray, k_up: int, s: int) -> np.ndarray:
    """Weight the zero-padded k_up x k_up neighbourhood of each source pixel.

    Output pixel (i, j) reads the window centred on input pixel (i//s, j//s).
    """
    check_tensor(x)
    n, c, h, w = x.shape
    if kernels.shape != (n, k_up * k_up, s * h, s * w):
        raise ValueError(f"kernels shape {kernels.shape} does not match {(n, k_up * k_up, s * h, s * w)}")
    r = k_up // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    ker = _blocks(kernels.astype(x.dtype, copy=False), s)
    out = np.zeros((n, c, h, s, w, s), dtype=x.dtype)
    for a in range(k_up):
        for b in range(k_up):
            window = xp[:, :, a:a + h, b:b + w]
            out += window[:, :, :, None, :, None] * ker[:, None, a * k_up + b]
    return out.reshape(n, c, s * h, s * w)


def carafe_reassemble_backward(x: np.ndarray, kernels: np.ndarray, k_up: int, s: int,
                               grad_out: np.ndarray):
    """Return (grad_x, grad_kernels)."""
    n, c, h, w = x.shape
    r = k_up // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    ker = _blocks(kernels, s)
    go = _blocks(grad_out, s)
    grad_xp = np.zeros_like(xp)
    grad_ker = np.zeros((n, k_up * k_up, h, s, w, s), dtype=np.result_type(x, kernels))
    for a in range(k_up):
        for b in range(k_up):
            k = a * k_up + b
            grad_ker[:, k] = np.einsum("nchiwj,nchw->nhiwj", go, xp[:, :, a:a + h, b:b + w])
            grad_xp[:, :, a:a + h, b:b + w] += np.einsum("nchiwj,nhiwj->nchw", go, ker[:, k])
    grad_x = np.ascontiguousarray(grad_xp[:, :, r:r + h, r:r + w])
    return grad_x, grad_ker.reshape(kernels.shape)


def carafe_upsample(cfg: CarafeConfig, weights: CarafeWeights, x: np.ndarray) -> np.ndarray:
    check_tensor(x)
    kernels = carafe_kernels(cfg, weights, x)
    return carafe_reassemble(x, kernels, cfg.k_up, cfg.scale)


def carafe_backward(cfg: CarafeConfig, weights: CarafeWeights, x: np.ndarray, grad_out: np.ndarray):
    """Gradients of :func:`carafe_upsample`; returns (grad_x, grads)."""
    kernels = carafe_kernels(cfg, weights, x)
    grad_x, grad_ker = carafe_reassemble_backward(x, kernels, cfg.k_up, cfg.scale, grad_out)
    grad_x_enc, grads = carafe_kernels_backward(cfg, weights, x, grad_ker)
    return grad_x + grad_x_enc, grads


# Operator objects: a common surface (scale, parameters(), __call__) for the
# complexity model, the benchmark harness and the CLI.

@dataclass
class NearestUpsample:
    scale: int = 2

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def __call__(self, x):
        return nearest_upsample(x, self.scale)


@dataclass
class BilinearUpsample:
    scale: int = 2

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def __call__(self, x):
        return bilinear_upsample(x, self.scale)


@dataclass
class DeconvUpsample:
    layer: Deconv2dLayer

    @property
    def scale(self) -> int:
        return self.layer.stride

    @classmethod
    def random(cls, channels: int, rng: Rng) -> "DeconvUpsample":
        return cls(Deconv2dLayer.random(channels, channels, rng, k=3, stride=2, padding=1, output_padding=1))

    def parameters(self):
        return self.layer.parameters()

    def __call__(self, x):
        return deconv_upsample(self.layer, x)


@dataclass
class PixelShuffleUpsample:
    conv: Conv2dLayer
    scale: int = 2

    @classmethod
    def random(cls, channels: int, rng: Rng, scale: int = 2) -> "PixelShuffleUpsample":
        return cls(Conv2dLayer.random(channels, channels * scale * scale, 3, rng, padding=1), scale)

    def parameters(self):
        return self.conv.parameters()

    def __call__(self, x):
        return pixelshuffle_upsample(self.conv, x, self.scale)


@dataclass
class Carafe:
    config: CarafeConfig
    weights: CarafeWeights

    @property
    def scale(self) -> int:
        return self.config.scale

    @classmethod
    def random(cls, channels: int, rng: Rng, config: CarafeConfig | None = None) -> "Carafe":
        config = config or CarafeConfig()
        return cls(config, CarafeWeights.random(config, channels, rng))

    def parameters(self):
        return self.weights.parameters()

    def __call__(self, x):
        return carafe_upsample(self.config, self.weights, x)
