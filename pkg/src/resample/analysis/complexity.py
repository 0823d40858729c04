"""Closed-form parameter and FLOP counts for every upsampler.

Convention: one multiply-add is 2 FLOPs. Bias additions are not counted.
Elementwise nonlinearities use the per-element constants below.
"""

from __future__ import annotations

from fractions import Fraction
from functools import singledispatch

from ..baselines import BilinearUpsample, Carafe, DeconvUpsample, NearestUpsample, PixelShuffleUpsample
from ..dysample import VARIANTS, DySampleModule, Scope, Style

__all__ = [
    "BLEND_FLOPS",
    "GRID_WEIGHT_FLOPS",
    "SIGMOID_FLOPS",
    "SOFTMAX_FLOPS",
    "TANH_FLOPS",
    "count_params",
    "flop_breakdown",
    "count_flops",
    "reassembly_ratio",
    "op_name",
]

# 2x2 bilinear blend of one channel at one output point: 4 multiply-adds.
BLEND_FLOPS = 8
# floor, two fractions, four tap weights per sampling point.
GRID_WEIGHT_FLOPS = 8
SIGMOID_FLOPS = 4
TANH_FLOPS = 6
# max-subtract, exp, sum, divide.
SOFTMAX_FLOPS = 5


def count_params(op) -> int:
    """Total number of learnable scalars."""
    return int(sum(p.size for p in op.parameters().values()))


def _dims(shape, channels=None):
    n, c, h, w = (int(d) for d in shape)
    if min(n, c, h, w) < 1:
        raise ValueError(f"invalid shape {shape}")
    if channels is not None and c != channels:
        raise ValueError(f"operator expects {channels} channels, shape has {c}")
    return n, c, h, w


def _dense(c_in: int, c_out: int, k: int, pixels: int) -> int:
    return 2 * c_in * c_out * k * k * pixels


@singledispatch
def flop_breakdown(op, shape) -> dict[str, int]:
    """Per-stage FLOPs for running ``op`` on an input of ``shape``."""
    raise TypeError(f"no FLOP model for {type(op).__name__}")


@flop_breakdown.register
def _(op: NearestUpsample, shape):
    _dims(shape)
    return {"reassembly": 0}


@flop_breakdown.register
def _(op: BilinearUpsample, shape):
    n, c, h, w = _dims(shape)
    s = op.scale
    return {"reassembly": BLEND_FLOPS * n * c * s * s * h * w}


@flop_breakdown.register
def _(op: DeconvUpsample, shape):
    c_in, c_out, k, _ = op.layer.weight.shape
    n, c, h, w = _dims(shape, c_in)
    # every input pixel scatters a k x k x c_out patch
    return {"deconv": n * _dense(c_in, c_out, k, h * w)}


@flop_breakdown.register
def _(op: PixelShuffleUpsample, shape):
    c_out, c_in, k, _ = op.conv.weight.shape
    n, c, h, w = _dims(shape, c_in)
    return {"conv": n * _dense(c_in, c_out, k, h * w), "shuffle": 0}


@flop_breakdown.register
def _(op: Carafe, shape):
    n, c, h, w = _dims(shape, op.weights.compressor.c_in)
    cfg = op.config
    s, kk = cfg.scale, cfg.k_up * cfg.k_up
    high = s * s * h * w
    return {
        "compressor": n * _dense(c, cfg.c_mid, 1, h * w),
        "encoder": n * _dense(cfg.c_mid, cfg.kernel_channels, cfg.k_enc, h * w),
        "normalize": n * SOFTMAX_FLOPS * kk * high,
        "reassembly": n * 2 * kk * c * high,
    }


@flop_breakdown.register
def _(op: DySampleModule, shape):
    n, c, h, w = _dims(shape, op.config.channels)
    cfg = op.config
    s, g = cfg.scale, cfg.groups
    high = s * s * h * w
    head_pixels = h * w if cfg.style is Style.LP else high
    offsets = cfg.head_out * head_pixels
    head = n * _dense(cfg.head_in, cfg.head_out, 1, head_pixels)
    out = {"offset_head": head}
    if cfg.scope is Scope.STATIC:
        out["scope"] = n * offsets
    elif cfg.scope is Scope.TANH:
        out["scope"] = n * (TANH_FLOPS + 1) * offsets
    else:
        out["scope_head"] = head
        out["scope"] = n * (SIGMOID_FLOPS + 2) * offsets
    out["grid"] = n * 2 * g * high
    out["sample_weights"] = n * GRID_WEIGHT_FLOPS * g * high
    out["reassembly"] = n * BLEND_FLOPS * c * high
    return out


def count_flops(op, shape) -> int:
    return int(sum(flop_breakdown(op, shape).values()))


def reassembly_ratio(numerator, denominator, shape) -> Fraction:
    """Exact ratio of the reassembly stages of two operators."""
    num = flop_breakdown(numerator, shape)["reassembly"]
    den = flop_breakdown(denominator, shape)["reassembly"]
    return Fraction(num, den)


def op_name(op) -> str:
    if isinstance(op, DySampleModule):
        for name, (style, scope) in VARIANTS.items():
            if (op.config.style, op.config.scope) == (style, scope):
                return name
        return f"dysample-{op.config.style.value}-{op.config.scope.value}"
    return {
        NearestUpsample: "nearest",
        BilinearUpsample: "bilinear",
        DeconvUpsample: "deconv",
        PixelShuffleUpsample: "pixelshuffle",
        Carafe: "carafe",
    }.get(type(op), type(op).__name__.lower())
