"""Dynamic point-sampling upsampler and its four named variants.

The upsampler predicts a per-pixel displacement for each of the s*s
children of every input pixel, adds it to a fixed initial grid and
bilinearly resamples the input there. Offsets are produced either by a
linear head followed by a pixel shuffle (``LP``) or by a pixel shuffle of
the input followed by a linear head (``PL``). Their magnitude is bounded by
a constant factor (static scope), a sigmoid-gated per-point factor (dynamic
scope) or, for ablations only, a tanh clamp.

Offset channel layout before the LP shuffle is, slowest to fastest,
(group, coordinate, dy, dx): channel ``(2*k + axis)*s*s + dy*s + dx``
holds axis ``axis`` (0 = x, 1 = y) of child (dy, dx) for group ``k``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .layers import LinearLayer, linear_backward, linear_forward, sigmoid, sigmoid_backward
from .sampler import InitMode, grid_sample, grid_sample_backward, make_base_grid
from .tensor import Rng, check_tensor, pixel_shuffle, pixel_unshuffle, randn

__all__ = [
    "Style",
    "Scope",
    "DySampleConfig",
    "DySampleModule",
    "VARIANTS",
    "make_variant",
    "generate_offsets",
    "build_sampling_set",
    "forward",
    "backward",
]


class Style(str, enum.Enum):
    LP = "lp"
    PL = "pl"


class Scope(str, enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    TANH = "tanh"


_DEFAULT_GROUPS = {Style.LP: 4, Style.PL: 8}
_DEFAULT_FACTOR = {Scope.STATIC: 0.25, Scope.DYNAMIC: 0.5, Scope.TANH: 0.25}


@dataclass(frozen=True)
class DySampleConfig:
    """Hyperparameters of one upsampler.

    ``scope_factor`` is the static multiplier, the dynamic cap, or the tanh
    bound depending on ``scope``; ``None`` picks 0.25 / 0.5 / 0.25.
    ``groups=None`` picks 4 for LP and 8 for PL.
    """

    channels: int
    scale: int = 2
    style: Style = Style.LP
    groups: Optional[int] = None
    scope: Scope = Scope.STATIC
    scope_factor: Optional[float] = None
    init: InitMode = InitMode.BILINEAR

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "style", Style(self.style))
        set_(self, "scope", Scope(self.scope))
        set_(self, "init", InitMode(self.init))
        if self.groups is None:
            set_(self, "groups", _DEFAULT_GROUPS[self.style])
        if self.scope_factor is None:
            set_(self, "scope_factor", _DEFAULT_FACTOR[self.scope])
        c, s, g = self.channels, self.scale, self.groups
        if s < 1 or c < 1 or g < 1:
            raise ValueError(f"channels, scale and groups must be positive, got {c}, {s}, {g}")
        if not self.scope_factor > 0:
            raise ValueError(f"scope factor must be positive, got {self.scope_factor}")
        if self.style is Style.LP and c % g:
            raise ValueError(f"LP style needs groups ({g}) to divide channels ({c})")
        if self.style is Style.PL:
            if c % (s * s):
                raise ValueError(f"PL style needs scale**2 ({s * s}) to divide channels ({c})")
            if (c // (s * s)) % g:
                raise ValueError(f"PL style needs groups ({g}) to divide channels/scale**2 ({c // (s * s)})")

    @property
    def head_in(self) -> int:
        if self.style is Style.LP:
            return self.channels
        return self.channels // (self.scale * self.scale)

    @property
    def head_out(self) -> int:
        if self.style is Style.LP:
            return 2 * self.groups * self.scale * self.scale
        return 2 * self.groups


@dataclass
class DySampleModule:
    config: DySampleConfig
    offset_head: LinearLayer = field(default=None)
    scope_head: Optional[LinearLayer] = None

    def __post_init__(self):
        cfg = self.config
        if self.offset_head is None:
            self.offset_head = LinearLayer.zeros(cfg.head_in, cfg.head_out)
        if cfg.scope is Scope.DYNAMIC and self.scope_head is None:
            self.scope_head = LinearLayer.zeros(cfg.head_in, cfg.head_out)
        heads = [self.offset_head] + ([self.scope_head] if self.scope_head is not None else [])
        for head in heads:
            if head.weight.shape != (cfg.head_out, cfg.head_in):
                raise ValueError(f"head weight {head.weight.shape} does not match "
                                 f"({cfg.head_out}, {cfg.head_in}) for {cfg}")
        if cfg.scope is not Scope.DYNAMIC and self.scope_head is not None:
            raise ValueError("only the dynamic scope uses a scope head")

    def parameters(self) -> dict[str, np.ndarray]:
        params = {f"offset.{k}": v for k, v in self.offset_head.parameters().items()}
        if self.scope_head is not None:
            params.update({f"scope.{k}": v for k, v in self.scope_head.parameters().items()})
        return params

    def randomize(self, rng: Rng, std: float) -> "DySampleModule":
        """Overwrite every parameter with N(0, std^2) draws, in place."""
        for i, (_, p) in enumerate(sorted(self.parameters().items())):
            p[...] = randn((1, 1, 1, p.size), rng.fork(i), std).reshape(p.shape)
        return self

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


VARIANTS = {
    "dysample": (Style.LP, Scope.STATIC),
    "dysample+": (Style.LP, Scope.DYNAMIC),
    "dysample-s": (Style.PL, Scope.STATIC),
    "dysample-s+": (Style.PL, Scope.DYNAMIC),
}


def make_variant(name: str, channels: int, scale: int = 2, *, groups: Optional[int] = None,
                 init: InitMode | str = InitMode.BILINEAR) -> DySampleModule:
    """Build a fresh (zero-initialised, bias-free) named variant."""
    try:
        style, scope = VARIANTS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; expected one of {sorted(VARIANTS)}") from None
    cfg = DySampleConfig(channels, scale, style, groups, scope, None, InitMode(init))
    return DySampleModule(cfg)


def _check_input(m: DySampleModule, x: np.ndarray) -> None:
    check_tensor(x)
    if x.shape[1] != m.config.channels:
        raise ValueError(f"module expects {m.config.channels} channels, got {x.shape[1]}")


def _head_input(m: DySampleModule, x: np.ndarray) -> np.ndarray:
    if m.config.style is Style.PL:
        return pixel_shuffle(x, m.config.scale)
    return x


def _offsets(m: DySampleModule, head_in: np.ndarray):
    """Pre-shuffle offsets plus the intermediates backward needs."""
    cfg = m.config
    raw = linear_forward(m.offset_head, head_in)
    factor = raw.dtype.type(cfg.scope_factor)
    if cfg.scope is Scope.STATIC:
        return factor * raw, (raw, None)
    if cfg.scope is Scope.TANH:
        t = np.tanh(raw)
        return factor * t, (raw, t)
    gate = sigmoid(linear_forward(m.scope_head, head_in))
    return factor * gate * raw, (raw, gate)


def _to_high_res(m: DySampleModule, o: np.ndarray) -> np.ndarray:
    if m.config.style is Style.LP:
        return pixel_shuffle(o, m.config.scale)
    return o


def generate_offsets(m: DySampleModule, x: np.ndarray) -> np.ndarray:
    """Offset field of shape (n, 2*g, s*h, s*w) in input-pixel units."""
    _check_input(m, x)
    o, _ = _offsets(m, _head_input(m, x))
    return _to_high_res(m, o)


def build_sampling_set(offsets: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Add a single-group base grid to every group of an offset field."""
    check_tensor(offsets, "offsets")
    check_tensor(grid, "grid")
    if grid.shape[1] != 2 or offsets.shape[1] % 2:
        raise ValueError(f"expected a (., 2, H, W) grid and even offset channels, "
                         f"got {grid.shape} and {offsets.shape}")
    if grid.shape[2:] != offsets.shape[2:]:
        raise ValueError(f"spatial mismatch: grid {grid.shape[2:]} vs offsets {offsets.shape[2:]}")
    if grid.shape[0] not in (1, offsets.shape[0]):
        raise ValueError(f"grid batch {grid.shape[0]} does not match offsets batch {offsets.shape[0]}")
    g = offsets.shape[1] // 2
    return offsets + np.tile(grid.astype(offsets.dtype, copy=False), (1, g, 1, 1))


def _sampling_set(m: DySampleModule, x: np.ndarray):
    cfg = m.config
    head_in = _head_input(m, x)
    o, cache = _offsets(m, head_in)
    n, _, h, w = x.shape
    base = make_base_grid(h, w, cfg.scale, cfg.init, dtype=x.dtype)
    return build_sampling_set(_to_high_res(m, o), base), head_in, cache


def forward(m: DySampleModule, x: np.ndarray) -> np.ndarray:
    """Upsample ``x`` (n, c, h, w) to (n, c, s*h, s*w)."""
    _check_input(m, x)
    sampling_set, _, _ = _sampling_set(m, x)
    return grid_sample(x, sampling_set)


def backward(m: DySampleModule, x: np.ndarray, grad_out: np.ndarray):
    """Return (grad_x, grads) with ``grads`` keyed like ``m.parameters()``.

    ``grad_x`` sums the resampling path and the offset-generation path.
    """
    _check_input(m, x)
    cfg = m.config
    sampling_set, head_in, (raw, aux) = _sampling_set(m, x)
    grad_x, grad_set = grid_sample_backward(x, sampling_set, grad_out)

    grad_o = pixel_unshuffle(grad_set, cfg.scale) if cfg.style is Style.LP else grad_set
    factor = grad_o.dtype.type(cfg.scope_factor)
    grads = {}
    if cfg.scope is Scope.STATIC:
        grad_raw = factor * grad_o
    elif cfg.scope is Scope.TANH:
        grad_raw = factor * (1 - aux * aux) * grad_o
    else:
        grad_raw = factor * aux * grad_o
        grad_gate_in = sigmoid_backward(aux, factor * raw * grad_o)
        gx, gw, gb = linear_backward(m.scope_head, head_in, grad_gate_in)
        grads["scope.weight"] = gw
        if gb is not None:
            grads["scope.bias"] = gb
        grad_head_in = gx
    gx, gw, gb = linear_backward(m.offset_head, head_in, grad_raw)
    grads["offset.weight"] = gw
    if gb is not None:
        grads["offset.bias"] = gb
    grad_head_in = gx if cfg.scope is not Scope.DYNAMIC else grad_head_in + gx

    if cfg.style is Style.PL:
        grad_head_in = pixel_unshuffle(grad_head_in, cfg.scale)
    return grad_x + grad_head_in, grads
