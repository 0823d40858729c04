"""Central finite-difference checks of the hand-written backward passes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import baselines, dysample, layers
from ..sampler import grid_sample, grid_sample_backward, make_base_grid
from ..tensor import Rng, randn

__all__ = [
    "GradCheckError",
    "GradProblem",
    "grad_check",
    "KINK_MARGIN",
    "TOLERANCES",
    "PROBLEMS",
    "make_problem",
    "run_gradcheck",
]

KINK_MARGIN = 1e-3

TOLERANCES = {
    "grid_sample": 1e-5,
    "linear": 1e-5,
    "conv": 1e-5,
    "deconv": 1e-5,
    "carafe_encoder": 1e-5,
    # softmax + reassembly composite, held to the composite-pipeline bound
    "carafe": 1e-4,
    "dysample": 1e-4,
    "dysample+": 1e-4,
    "dysample-s": 1e-4,
    "dysample-s+": 1e-4,
}


class GradCheckError(ValueError):
    pass


@dataclass
class GradProblem:
    """A differentiable function of the arrays in ``inputs``.

    ``forward()`` reads ``inputs`` (which the checker perturbs in place) and
    returns the output; ``backward(grad_out)`` returns gradients keyed like
    ``inputs``.
    """

    inputs: dict[str, np.ndarray]
    forward: Callable[[], np.ndarray]
    backward: Callable[[np.ndarray], dict[str, np.ndarray]]


def grad_check(problem: GradProblem, eps: float = 1e-6, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    The scalar probed is ``sum(forward() * r)`` for a fixed random ``r``,
    summed with ``math.fsum`` so that untouched outputs cancel exactly.
    Relative error per coordinate uses the denominator max(|a|, |n|, 1e-8).
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    for name, arr in problem.inputs.items():
        if arr.dtype != np.float64:
            raise TypeError(f"input {name!r} must be float64, got {arr.dtype}")
    out = problem.forward()
    probe = randn((1, 1, 1, out.size), Rng(seed).fork(0xD1FF)).reshape(out.shape)

    def loss() -> float:
        return math.fsum((problem.forward() * probe).ravel())

    analytic = problem.backward(probe)
    worst = 0.0
    for name, arr in problem.inputs.items():
        grad = np.asarray(analytic[name])
        if grad.shape != arr.shape:
            raise GradCheckError(f"gradient for {name!r} has shape {grad.shape}, expected {arr.shape}")
        if not np.all(np.isfinite(grad)):
            raise GradCheckError(f"non-finite analytic gradient for {name!r}")
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss()
            flat[i] = orig - eps
            down = loss()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            if not math.isfinite(numeric):
                raise GradCheckError(f"non-finite numeric gradient for {name!r}[{i}]")
            a = gflat[i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-8))
    return worst


def _kink_distance(coords: np.ndarray, h: int, w: int) -> float:
    """Distance of in-range sampling coordinates to the nearest integer."""
    x, y = coords[:, 0::2], coords[:, 1::2]
    dist = []
    for c, size in ((x, w), (y, h)):
        # clamp boundaries sit on integers, so in-range-or-near points suffice
        near = c[(c > -KINK_MARGIN) & (c < size - 1 + KINK_MARGIN)]
        if near.size:
            dist.append(np.abs(near - np.round(near)).min())
    return min(dist, default=1.0)


def _grid_sample_problem(rng: Rng) -> GradProblem:
    n, g, cg, h, w, h2, w2 = 2, 2, 2, 4, 5, 3, 4
    x = randn((n, g * cg, h, w), rng.fork(0))
    u = rng.fork(1).uniform(n * 2 * g * h2 * w2).reshape(n, 2 * g, h2, w2)
    grid = np.empty_like(u)
    # a margin of one pixel outside the image exercises the clamp
    grid[:, 0::2] = -1 + u[:, 0::2] * (w + 1)
    grid[:, 1::2] = -1 + u[:, 1::2] * (h + 1)
    frac = grid - np.round(grid)
    grid += np.where(np.abs(frac) < KINK_MARGIN, 2 * KINK_MARGIN, 0.0)
    inputs = {"x": x, "grid": grid}

    def backward(go):
        gx, gg = grid_sample_backward(x, grid, go)
        return {"x": gx, "grid": gg}

    return GradProblem(inputs, lambda: grid_sample(x, grid), backward)


def _layer_problem(layer, fwd, bwd, x) -> GradProblem:
    params = layer.parameters()
    inputs = {"x": x, **params}

    def backward(go):
        gx, gw, gb = bwd(layer, x, go)
        grads = {"x": gx, "weight": gw}
        if gb is not None:
            grads["bias"] = gb
        return grads

    return GradProblem(inputs, lambda: fwd(layer, x), backward)


def _with_random_bias(layer, rng: Rng):
    layer.bias[...] = randn((1, 1, 1, layer.bias.size), rng).ravel()
    return layer


def _linear_problem(rng: Rng) -> GradProblem:
    layer = _with_random_bias(layers.LinearLayer.random(5, 3, rng.fork(0)), rng.fork(1))
    return _layer_problem(layer, layers.linear_forward, layers.linear_backward,
                          randn((2, 5, 3, 4), rng.fork(2)))


def _conv_problem(rng: Rng) -> GradProblem:
    layer = _with_random_bias(layers.Conv2dLayer.random(3, 4, 3, rng.fork(0), stride=2, padding=1), rng.fork(1))
    return _layer_problem(layer, layers.conv2d_forward, layers.conv2d_backward,
                          randn((2, 3, 5, 6), rng.fork(2)))


def _deconv_problem(rng: Rng) -> GradProblem:
    layer = _with_random_bias(layers.Deconv2dLayer.random(3, 2, rng.fork(0)), rng.fork(1))
    return _layer_problem(layer, layers.deconv2d_forward, layers.deconv2d_backward,
                          randn((2, 3, 3, 4), rng.fork(2)))


def _carafe_parts(rng: Rng):
    cfg = baselines.CarafeConfig(scale=2, k_up=3, k_enc=3, c_mid=4)
    weights = baselines.CarafeWeights.random(cfg, 3, rng.fork(0))
    x = randn((1, 3, 4, 4), rng.fork(3))
    return cfg, weights, x


def _carafe_encoder_problem(rng: Rng) -> GradProblem:
    cfg, weights, x = _carafe_parts(rng)
    inputs = {"x": x, **weights.parameters()}

    def backward(go):
        gx, grads = baselines.carafe_encoder_backward(cfg, weights, x, go)
        return {"x": gx, **grads}

    return GradProblem(inputs, lambda: baselines.carafe_encoder(cfg, weights, x), backward)


def _carafe_problem(rng: Rng) -> GradProblem:
    cfg, weights, x = _carafe_parts(rng)
    inputs = {"x": x, **weights.parameters()}

    def backward(go):
        gx, grads = baselines.carafe_backward(cfg, weights, x, go)
        return {"x": gx, **grads}

    return GradProblem(inputs, lambda: baselines.carafe_upsample(cfg, weights, x), backward)


def _dysample_problem(variant: str, rng: Rng) -> GradProblem:
    # PL variants need channels/scale**2 divisible by their 8 groups
    channels = 32 if variant.startswith("dysample-s") else 8
    h = w = 5
    for attempt in range(10_000):
        sub = rng.fork(attempt)
        m = dysample.make_variant(variant, channels, 2).randomize(sub.fork(0), 0.5)
        x = randn((1, channels, h, w), sub.fork(1))
        base = make_base_grid(h, w, 2)
        coords = dysample.build_sampling_set(dysample.generate_offsets(m, x), base)
        if _kink_distance(coords, h, w) >= KINK_MARGIN:
            break
    else:  # pragma: no cover
        raise GradCheckError(f"could not place {variant} sampling points away from kinks")
    inputs = {"x": x, **m.parameters()}

    def backward(go):
        gx, grads = dysample.backward(m, x, go)
        return {"x": gx, **grads}

    return GradProblem(inputs, lambda: dysample.forward(m, x), backward)


PROBLEMS = {
    "grid_sample": _grid_sample_problem,
    "linear": _linear_problem,
    "conv": _conv_problem,
    "deconv": _deconv_problem,
    "carafe_encoder": _carafe_encoder_problem,
    "carafe": _carafe_problem,
    **{v: (lambda rng, v=v: _dysample_problem(v, rng)) for v in dysample.VARIANTS},
}


def make_problem(op: str, seed: int) -> GradProblem:
    try:
        builder = PROBLEMS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(PROBLEMS)}") from None
    return builder(Rng(seed))


def run_gradcheck(op: str, trials: int = 20, seed: int = 0, eps: float = 1e-6) -> float:
    """Worst relative error of ``op`` over ``trials`` seeded random instances."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    worst = 0.0
    for t in range(trials):
        worst = max(worst, grad_check(make_problem(op, seed * 1_000_003 + t), eps, seed=t))
    return worst
