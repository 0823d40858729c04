"""Toy reconstruction task showing that learned sampling beats bilinear."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import dysample
from ..baselines import bilinear_upsample
from ..layers import sgd_step
from ..tensor import Rng

__all__ = ["EdgeTask", "make_task", "mse", "toy_fit", "TrainingDiverged", "LR_GRID", "DEFAULT_LR", "DEFAULT_STEPS"]

LR_GRID = (1e-2, 1e-1, 1.0)
# best of LR_GRID for every variant on the edge task (largest margin, no divergence)
DEFAULT_LR = 1.0
DEFAULT_STEPS = 300


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class EdgeTask:
    """Low-res input and high-res target of a piecewise-constant scene."""

    low: np.ndarray
    high: np.ndarray
    scale: int

    def bilinear_mse(self) -> float:
        return mse(bilinear_upsample(self.low, self.scale), self.high)


def _regions(kind: str, size: int, rng: Rng, n_lines: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    if kind == "checkerboard":
        # odd period so that cell borders do not align with the low-res blocks
        period = 7
        return ((xx // period + yy // period) % 2).astype(np.int64)
    if kind != "edges":
        raise ValueError(f"unknown task kind {kind!r}; expected 'edges' or 'checkerboard'")
    u = rng.uniform(3 * n_lines).reshape(n_lines, 3)
    labels = np.zeros((size, size), dtype=np.int64)
    for i, (theta, ox, oy) in enumerate(u):
        angle = 2 * np.pi * theta
        side = (xx - ox * size) * np.cos(angle) + (yy - oy * size) * np.sin(angle) > 0
        labels |= side.astype(np.int64) << i
    return labels


def make_task(channels: int, scale: int = 2, size: int = 64, seed: int = 0,
              kind: str = "edges", n_lines: int = 3) -> EdgeTask:
    """Seeded scene: shared region layout, independent level per region and channel.

    The low-res input is the s x s box average of the target.
    """
    if size % scale:
        raise ValueError(f"size {size} is not divisible by scale {scale}")
    rng = Rng(seed)
    labels = _regions(kind, size, rng.fork(0), n_lines)
    n_regions = int(labels.max()) + 1
    levels = rng.fork(1).uniform(channels * n_regions).reshape(channels, n_regions) * 2 - 1
    high = levels[:, labels][None]
    low = high.reshape(1, channels, size // scale, scale, size // scale, scale).mean(axis=(3, 5))
    return EdgeTask(low, high, scale)


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((pred - target) ** 2))


def toy_fit(module: dysample.DySampleModule, task: EdgeTask, steps: int, lr: float) -> np.ndarray:
    """Full-batch SGD on the MSE; returns the ``steps + 1`` losses seen.

    Entry 0 is the loss before any update. The module is trained in place.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if module.config.scale != task.scale:
        raise ValueError(f"module scale {module.config.scale} != task scale {task.scale}")
    losses = np.empty(steps + 1)
    params = module.parameters()
    for step in range(steps + 1):
        try:
            pred = dysample.forward(module, task.low)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"{exc} at step {step}") from None
        diff = pred - task.high
        loss = float(np.mean(diff * diff))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at step {step}")
        losses[step] = loss
        if step == steps:
            break
        _, grads = dysample.backward(module, task.low, 2 * diff / diff.size)
        sgd_step(params, grads, lr)
    return losses
