"""Point sampling: base grids and bilinear grid sampling.

A sampling grid is a 4-D array of shape (n, 2*g, H2, W2). Channel pair
(2k, 2k+1) holds the (x, y) source coordinates used by channel group k of
the sampled feature. Coordinates are in input-pixel units with pixel
centres at integers, so x runs over [0, W1 - 1] and y over [0, H1 - 1].
Points outside that box are clamped to the border before interpolation.
A grid with batch size 1 is broadcast over the feature's batch.
"""

from __future__ import annotations

import enum

import numpy as np
import scipy.sparse

from .tensor import check_tensor

__all__ = [
    "InitMode",
    "make_base_grid",
    "grid_groups",
    "grid_sample",
    "grid_sample_backward",
]


class InitMode(str, enum.Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"


def make_base_grid(h: int, w: int, s: int, mode: InitMode | str = InitMode.BILINEAR,
                   dtype=np.float64) -> np.ndarray:
    """Initial sampling positions for ``s``-times upsampling of an h x w map.

    ``BILINEAR`` spreads the s*s children of a pixel evenly around its centre
    (half-pixel convention), so zero offsets give bilinear upsampling.
    ``NEAREST`` stacks all children on the parent centre. Returns an array of
    shape (1, 2, s*h, s*w).
    """
    mode = InitMode(mode)
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    j = np.arange(s * w, dtype=np.float64)
    i = np.arange(s * h, dtype=np.float64)
    if mode is InitMode.BILINEAR:
        xs = (j + 0.5) / s - 0.5
        ys = (i + 0.5) / s - 0.5
    else:
        xs = np.floor(j / s)
        ys = np.floor(i / s)
    grid = np.empty((1, 2, s * h, s * w), dtype=dtype)
    grid[0, 0] = xs[None, :]
    grid[0, 1] = ys[:, None]
    return grid


def grid_groups(grid: np.ndarray) -> int:
    if grid.shape[1] % 2:
        raise ValueError(f"grid must have an even channel count, got {grid.shape[1]}")
    return grid.shape[1] // 2


def _check_pair(x: np.ndarray, grid: np.ndarray) -> int:
    check_tensor(x)
    check_tensor(grid, "grid")
    g = grid_groups(grid)
    if x.shape[1] % g:
        raise ValueError(f"{x.shape[1]} channels cannot be split into {g} sampling groups")
    if grid.shape[0] not in (1, x.shape[0]):
        raise ValueError(f"grid batch {grid.shape[0]} does not match feature batch {x.shape[0]}")
    if not np.all(np.isfinite(grid)):
        raise FloatingPointError("grid contains non-finite sampling coordinates")
    return g


def _axis_taps(coord: np.ndarray, size: int):
    """Clamp ``coord`` to [0, size-1]; return (lo, hi, frac, inside)."""
    inside = (coord >= 0) & (coord <= size - 1)
    c = np.clip(coord, 0, size - 1)
    lo = np.floor(c).astype(np.intp)
    hi = np.minimum(lo + 1, size - 1)
    return lo, hi, c - lo, inside


class _Taps:
    """Neighbour indices and weights of one (batch, group) grid slice."""

    def __init__(self, gx: np.ndarray, gy: np.ndarray, h1: int, w1: int, dtype):
        x0, x1, self.fx, self.in_x = _axis_taps(gx.ravel(), w1)
        y0, y1, self.fy, self.in_y = _axis_taps(gy.ravel(), h1)
        self.fx = self.fx.astype(dtype, copy=False)
        self.fy = self.fy.astype(dtype, copy=False)
        self.i00 = y0 * w1 + x0
        self.i01 = y0 * w1 + x1
        self.i10 = y1 * w1 + x0
        self.i11 = y1 * w1 + x1

    def weights(self):
        gx, gy = 1 - self.fx, 1 - self.fy
        return gy * gx, gy * self.fx, self.fy * gx, self.fy * self.fx

    def gather(self, flat: np.ndarray):
        return flat[:, self.i00], flat[:, self.i01], flat[:, self.i10], flat[:, self.i11]

    def matrix(self, hw: int) -> scipy.sparse.csr_matrix:
        """Sparse (P, hw) interpolation matrix; duplicate taps are summed."""
        p = self.i00.size
        rows = np.tile(np.arange(p), 4)
        cols = np.concatenate([self.i00, self.i01, self.i10, self.i11])
        vals = np.concatenate(self.weights())
        return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(p, hw))


def grid_sample(x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Bilinearly sample ``x`` at the points of ``grid`` (border clamped)."""
    g = _check_pair(x, grid)
    n, c, h1, w1 = x.shape
    h2, w2 = grid.shape[2:]
    cg = c // g
    out = np.empty((n, c, h2, w2), dtype=x.dtype)
    for b in range(n):
        gb = grid[b if grid.shape[0] > 1 else 0]
        for k in range(g):
            taps = _Taps(gb[2 * k], gb[2 * k + 1], h1, w1, x.dtype)
            flat = x[b, k * cg:(k + 1) * cg].reshape(cg, h1 * w1)
            v00, v01, v10, v11 = taps.gather(flat)
            fx, fy = taps.fx, taps.fy
            top = v00 + fx * (v01 - v00)
            bottom = v10 + fx * (v11 - v10)
            out[b, k * cg:(k + 1) * cg] = (top + fy * (bottom - top)).reshape(cg, h2, w2)
    return out


def grid_sample_backward(x: np.ndarray, grid: np.ndarray, grad_out: np.ndarray):
    """Gradients of :func:`grid_sample` w.r.t. the feature and the grid.

    The coordinate gradient is zero wherever the coordinate was clamped.
    A broadcast (batch 1) grid receives the batch-summed gradient.
    """
    g = _check_pair(x, grid)
    n, c, h1, w1 = x.shape
    h2, w2 = grid.shape[2:]
    if grad_out.shape != (n, c, h2, w2):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match output {(n, c, h2, w2)}")
    cg = c // g
    grad_x = np.zeros_like(x)
    grad_grid = np.zeros(grid.shape, dtype=np.result_type(grid.dtype, x.dtype))
    for b in range(n):
        gi = b if grid.shape[0] > 1 else 0
        gb = grid[gi]
        for k in range(g):
            taps = _Taps(gb[2 * k], gb[2 * k + 1], h1, w1, x.dtype)
            flat = x[b, k * cg:(k + 1) * cg].reshape(cg, h1 * w1)
            go = grad_out[b, k * cg:(k + 1) * cg].reshape(cg, h2 * w2)
            grad_x[b, k * cg:(k + 1) * cg] = (taps.matrix(h1 * w1).T @ go.T).T.reshape(cg, h1, w1)

            v00, v01, v10, v11 = taps.gather(flat)
            fx, fy = taps.fx, taps.fy
            d_dx = (1 - fy) * (v01 - v00) + fy * (v11 - v10)
            d_dy = (1 - fx) * (v10 - v00) + fx * (v11 - v01)
            gx = np.einsum("cp,cp->p", go, d_dx) * taps.in_x
            gy = np.einsum("cp,cp->p", go, d_dy) * taps.in_y
            grad_grid[gi, 2 * k] += gx.reshape(h2, w2)
            grad_grid[gi, 2 * k + 1] += gy.reshape(h2, w2)
    return grad_x, grad_grid
