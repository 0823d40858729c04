"""Learnable primitives with hand-written backward passes.

Weights follow the usual deep-learning layouts: linear (c_out, c_in),
conv (c_out, c_in, k, k), transposed conv (c_in, c_out, k, k).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .tensor import Rng, check_tensor, randn

__all__ = [
    "LinearLayer",
    "Conv2dLayer",
    "Deconv2dLayer",
    "fan_in_normal",
    "linear_forward",
    "linear_backward",
    "conv2d_forward",
    "conv2d_backward",
    "deconv2d_forward",
    "deconv2d_backward",
    "conv_output_size",
    "deconv_output_size",
    "sigmoid",
    "sigmoid_backward",
    "softmax_channels",
    "softmax_channels_backward",
    "sgd_step",
]


def fan_in_normal(shape, rng: Rng, fan_in: int) -> np.ndarray:
    """Normal weights with std 1/sqrt(fan_in), drawn from ``rng``."""
    flat = randn((1, 1, 1, int(np.prod(shape))), rng, std=1.0 / np.sqrt(fan_in))
    return flat.reshape(shape)


def _params(weight, bias) -> dict[str, np.ndarray]:
    out = {"weight": weight}
    if bias is not None:
        out["bias"] = bias
    return out


@dataclass
class LinearLayer:
    """Per-pixel projection, i.e. a 1x1 convolution without spatial extent."""

    weight: np.ndarray
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.weight.ndim != 2:
            raise ValueError(f"linear weight must be 2-D, got shape {self.weight.shape}")
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} outputs")

    @property
    def c_in(self) -> int:
        return self.weight.shape[1]

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def zeros(cls, c_in: int, c_out: int, bias: bool = False) -> "LinearLayer":
        return cls(np.zeros((c_out, c_in)), np.zeros(c_out) if bias else None)

    @classmethod
    def random(cls, c_in: int, c_out: int, rng: Rng, bias: bool = True) -> "LinearLayer":
        return cls(fan_in_normal((c_out, c_in), rng, c_in), np.zeros(c_out) if bias else None)

    def parameters(self) -> dict[str, np.ndarray]:
        return _params(self.weight, self.bias)


@dataclass
class Conv2dLayer:
    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        w = self.weight
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] < 1:
            raise ValueError(f"conv weight must be (c_out, c_in, k, k), got {w.shape}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError(f"invalid stride/padding {self.stride}/{self.padding}")
        if self.bias is not None and self.bias.shape != (w.shape[0],):
            raise ValueError(f"bias shape {self.bias.shape} does not match {w.shape[0]} outputs")

    @property
    def k(self) -> int:
        return self.weight.shape[2]

    @classmethod
    def random(cls, c_in: int, c_out: int, k: int, rng: Rng, *, stride: int = 1,
               padding: int | None = None, bias: bool = True) -> "Conv2dLayer":
        padding = k // 2 if padding is None else padding
        weight = fan_in_normal((c_out, c_in, k, k), rng, c_in * k * k)
        return cls(weight, np.zeros(c_out) if bias else None, stride, padding)

    def parameters(self) -> dict[str, np.ndarray]:
        return _params(self.weight, self.bias)


@dataclass
class Deconv2dLayer:
    """Transposed convolution; weight layout (c_in, c_out, k, k)."""

    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 2
    padding: int = 1
    output_padding: int = 1

    def __post_init__(self):
        w = self.weight
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] < 1:
            raise ValueError(f"deconv weight must be (c_in, c_out, k, k), got {w.shape}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError(f"invalid stride/padding {self.stride}/{self.padding}")
        if not 0 <= self.output_padding < self.stride:
            raise ValueError(f"output_padding must be in [0, stride), got {self.output_padding}")
        if self.bias is not None and self.bias.shape != (w.shape[1],):
            raise ValueError(f"bias shape {self.bias.shape} does not match {w.shape[1]} outputs")

    @property
    def k(self) -> int:
        return self.weight.shape[2]

    @classmethod
    def random(cls, c_in: int, c_out: int, rng: Rng, *, k: int = 3, stride: int = 2,
               padding: int = 1, output_padding: int = 1, bias: bool = True) -> "Deconv2dLayer":
        weight = fan_in_normal((c_in, c_out, k, k), rng, c_in * k * k)
        return cls(weight, np.zeros(c_out) if bias else None, stride, padding, output_padding)

    def parameters(self) -> dict[str, np.ndarray]:
        return _params(self.weight, self.bias)


def _add_bias(out: np.ndarray, bias: Optional[np.ndarray]) -> np.ndarray:
    if bias is not None:
        out += bias.astype(out.dtype, copy=False)[None, :, None, None]
    return out


def _bias_grad(layer_bias, grad_out: np.ndarray):
    return None if layer_bias is None else grad_out.sum(axis=(0, 2, 3))


def linear_forward(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    check_tensor(x)
    n, c, h, w = x.shape
    if c != layer.c_in:
        raise ValueError(f"linear layer expects {layer.c_in} channels, got {c}")
    weight = np.ascontiguousarray(layer.weight, dtype=x.dtype)
    out = (weight @ x.reshape(n, c, h * w)).reshape(n, layer.c_out, h, w)
    return _add_bias(out, layer.bias)


def linear_backward(layer: LinearLayer, x: np.ndarray, grad_out: np.ndarray):
    """Return (grad_x, grad_weight, grad_bias); grad_bias is None without bias."""
    n, c, h, w = x.shape
    if grad_out.shape != (n, layer.c_out, h, w):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match {(n, layer.c_out, h, w)}")
    x3 = x.reshape(n, c, h * w)
    g3 = grad_out.reshape(n, layer.c_out, h * w)
    grad_x = (layer.weight.T.astype(x.dtype) @ g3).reshape(x.shape)
    grad_w = np.einsum("nop,ncp->oc", g3, x3)
    return grad_x, grad_w, _bias_grad(layer.bias, grad_out)


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def deconv_output_size(size: int, k: int, stride: int, padding: int, output_padding: int) -> int:
    return (size - 1) * stride - 2 * padding + k + output_padding


def _conv_geometry(layer: Conv2dLayer, x: np.ndarray):
    check_tensor(x)
    n, c, h, w = x.shape
    c_out, c_in, k, _ = layer.weight.shape
    if c != c_in:
        raise ValueError(f"conv layer expects {c_in} channels, got {c}")
    ho = conv_output_size(h, k, layer.stride, layer.padding)
    wo = conv_output_size(w, k, layer.stride, layer.padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel {k} does not fit a {h}x{w} input with padding {layer.padding}")
    return n, c, h, w, c_out, k, ho, wo


def _tap(arr: np.ndarray, ky: int, kx: int, stride: int, ho: int, wo: int) -> np.ndarray:
    return arr[:, :, ky:ky + stride * (ho - 1) + 1:stride, kx:kx + stride * (wo - 1) + 1:stride]


def conv2d_forward(layer: Conv2dLayer, x: np.ndarray) -> np.ndarray:
    """Cross-correlation with zero padding."""
    n, c, h, w, c_out, k, ho, wo = _conv_geometry(layer, x)
    p, st = layer.padding, layer.stride
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    out = np.zeros((n, c_out, ho * wo), dtype=x.dtype)
    for ky in range(k):
        for kx in range(k):
            wk = np.ascontiguousarray(layer.weight[:, :, ky, kx], dtype=x.dtype)
            patch = np.ascontiguousarray(_tap(xp, ky, kx, st, ho, wo)).reshape(n, c, ho * wo)
            out += wk @ patch
    return _add_bias(out.reshape(n, c_out, ho, wo), layer.bias)


def conv2d_backward(layer: Conv2dLayer, x: np.ndarray, grad_out: np.ndarray):
    """Return (grad_x, grad_weight, grad_bias)."""
    n, c, h, w, c_out, k, ho, wo = _conv_geometry(layer, x)
    if grad_out.shape != (n, c_out, ho, wo):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match {(n, c_out, ho, wo)}")
    p, st = layer.padding, layer.stride
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    grad_xp = np.zeros_like(xp)
    grad_w = np.zeros(layer.weight.shape, dtype=np.result_type(layer.weight, x))
    g3 = grad_out.reshape(n, c_out, ho * wo)
    for ky in range(k):
        for kx in range(k):
            patch = np.ascontiguousarray(_tap(xp, ky, kx, st, ho, wo)).reshape(n, c, ho * wo)
            grad_w[:, :, ky, kx] = np.einsum("nop,ncp->oc", g3, patch)
            back = (layer.weight[:, :, ky, kx].T.astype(x.dtype) @ g3).reshape(n, c, ho, wo)
            _tap(grad_xp, ky, kx, st, ho, wo)[...] += back
    grad_x = grad_xp[:, :, p:p + h, p:p + w] if p else grad_xp
    return np.ascontiguousarray(grad_x), grad_w, _bias_grad(layer.bias, grad_out)


def _deconv_geometry(layer: Deconv2dLayer, x: np.ndarray):
    check_tensor(x)
    n, c, h, w = x.shape
    c_in, c_out, k, _ = layer.weight.shape
    if c != c_in:
        raise ValueError(f"deconv layer expects {c_in} channels, got {c}")
    args = (k, layer.stride, layer.padding, layer.output_padding)
    ho, wo = deconv_output_size(h, *args), deconv_output_size(w, *args)
    if ho < 1 or wo < 1:
        raise ValueError(f"deconv geometry gives an empty output for a {h}x{w} input")
    p = layer.padding
    canvas = (max((h - 1) * layer.stride + k, p + ho), max((w - 1) * layer.stride + k, p + wo))
    return n, c, h, w, c_out, k, ho, wo, canvas


def deconv2d_forward(layer: Deconv2dLayer, x: np.ndarray) -> np.ndarray:
    """Transposed convolution: the input-gradient map of a strided conv."""
    n, c, h, w, c_out, k, ho, wo, (ch, cw) = _deconv_geometry(layer, x)
    st, p = layer.stride, layer.padding
    canvas = np.zeros((n, c_out, ch, cw), dtype=x.dtype)
    x3 = x.reshape(n, c, h * w)
    for ky in range(k):
        for kx in range(k):
            wk = np.ascontiguousarray(layer.weight[:, :, ky, kx].T, dtype=x.dtype)
            _tap(canvas, ky, kx, st, h, w)[...] += (wk @ x3).reshape(n, c_out, h, w)
    out = np.ascontiguousarray(canvas[:, :, p:p + ho, p:p + wo])
    return _add_bias(out, layer.bias)


def deconv2d_backward(layer: Deconv2dLayer, x: np.ndarray, grad_out: np.ndarray):
    """Return (grad_x, grad_weight, grad_bias)."""
    n, c, h, w, c_out, k, ho, wo, (ch, cw) = _deconv_geometry(layer, x)
    if grad_out.shape != (n, c_out, ho, wo):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match {(n, c_out, ho, wo)}")
    st, p = layer.stride, layer.padding
    gcanvas = np.zeros((n, c_out, ch, cw), dtype=grad_out.dtype)
    gcanvas[:, :, p:p + ho, p:p + wo] = grad_out
    x3 = x.reshape(n, c, h * w)
    grad_x = np.zeros((n, c, h * w), dtype=x.dtype)
    grad_w = np.zeros(layer.weight.shape, dtype=np.result_type(layer.weight, x))
    for ky in range(k):
        for kx in range(k):
            gk = np.ascontiguousarray(_tap(gcanvas, ky, kx, st, h, w)).reshape(n, c_out, h * w)
            grad_x += layer.weight[:, :, ky, kx].astype(x.dtype) @ gk
            grad_w[:, :, ky, kx] = np.einsum("ncp,nop->co", x3, gk)
    return grad_x.reshape(x.shape), grad_w, _bias_grad(layer.bias, grad_out)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def sigmoid_backward(y: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient through the sigmoid given its output ``y``."""
    return grad_out * y * (1 - y)


def _grouped(x: np.ndarray, group_size: int) -> np.ndarray:
    n, c, h, w = x.shape
    if group_size < 1 or c % group_size:
        raise ValueError(f"group size {group_size} does not divide {c} channels")
    return x.reshape(n, c // group_size, group_size, h, w)


def softmax_channels(x: np.ndarray, group_size: int) -> np.ndarray:
    """Softmax over each run of ``group_size`` consecutive channels, per pixel."""
    check_tensor(x)
    z = _grouped(x, group_size)
    e = np.exp(z - z.max(axis=2, keepdims=True))
    return (e / e.sum(axis=2, keepdims=True)).reshape(x.shape)


def softmax_channels_backward(y: np.ndarray, grad_out: np.ndarray, group_size: int) -> np.ndarray:
    yg = _grouped(y, group_size)
    gg = _grouped(grad_out, group_size)
    return (yg * (gg - (gg * yg).sum(axis=2, keepdims=True))).reshape(y.shape)


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
    """In-place ``p -= lr * g`` for every named parameter; returns ``params``."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if params.keys() != grads.keys():
        raise ValueError(f"parameter/gradient names differ: {sorted(params)} vs {sorted(grads)}")
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {np.shape(g)}, expected {p.shape}")
        p -= lr * g
    return params
