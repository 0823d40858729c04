"""Dense NCHW tensors as plain numpy arrays.

Every public function takes and returns 4-D ``numpy.ndarray`` objects in
(batch, channel, height, width) order, C-contiguous, float64 unless the
caller asks for float32. Nothing here mutates its inputs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "Rng",
    "check_tensor",
    "zeros",
    "full",
    "from_data",
    "randn",
    "pixel_shuffle",
    "pixel_unshuffle",
    "add",
    "sub",
    "mul_scalar",
    "mul_elementwise",
    "concat_channels",
    "split_channels",
]

_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 stream, vectorised over numpy uint64 lanes.

    The generator is counter based: draw ``k`` (0-indexed, across all calls)
    is ``mix(seed + (k + 1) * golden)``, so identical seeds give identical
    streams regardless of how the draws are batched.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._counter = 0

    def next_u64(self, size: int) -> np.ndarray:
        k = np.arange(self._counter + 1, self._counter + 1 + size, dtype=np.uint64)
        self._counter += size
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + k * _GOLDEN
        return _mix64(z)

    def uniform(self, size: int) -> np.ndarray:
        """Doubles in the half-open interval (0, 1]."""
        top = (self.next_u64(size) >> np.uint64(11)).astype(np.float64)
        return (top + 1.0) * 2.0**-53

    def fork(self, stream: int) -> "Rng":
        """Independent generator keyed by ``stream``; does not advance ``self``."""
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) ^ (np.uint64(int(stream) & 0xFFFFFFFFFFFFFFFF) * _MIX2)
        return Rng(int(_mix64(np.array([z], dtype=np.uint64))[0]))


def _check_shape(shape: Sequence[int]) -> tuple[int, int, int, int]:
    shape = tuple(int(d) for d in shape)
    if len(shape) != 4:
        raise ValueError(f"expected a 4-D (n, c, h, w) shape, got {shape}")
    if any(d < 1 for d in shape):
        raise ValueError(f"shape components must be >= 1, got {shape}")
    return shape  # type: ignore[return-value]


def _check_dtype(dtype) -> np.dtype:
    dtype = np.dtype(dtype)
    if dtype not in _DTYPES:
        raise TypeError(f"dtype must be float32 or float64, got {dtype}")
    return dtype


def check_tensor(x: np.ndarray, name: str = "x") -> np.ndarray:
    """Validate that ``x`` is a finite-shaped 4-D float tensor and return it."""
    if not isinstance(x, np.ndarray):
        raise TypeError(f"{name} must be a numpy array, got {type(x).__name__}")
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (n, c, h, w), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {x.shape}")
    _check_dtype(x.dtype)
    return x


def zeros(shape: Sequence[int], dtype=np.float64) -> np.ndarray:
    return np.zeros(_check_shape(shape), dtype=_check_dtype(dtype))


def full(shape: Sequence[int], value: float, dtype=np.float64) -> np.ndarray:
    return np.full(_check_shape(shape), value, dtype=_check_dtype(dtype))


def from_data(shape: Sequence[int], values, dtype=np.float64) -> np.ndarray:
    shape = _check_shape(shape)
    flat = np.asarray(values, dtype=_check_dtype(dtype)).ravel()
    expected = int(np.prod(shape))
    if flat.size != expected:
        raise ValueError(f"shape {shape} needs {expected} values, got {flat.size}")
    return flat.reshape(shape).copy()


def randn(shape: Sequence[int], rng: Rng, std: float = 1.0, dtype=np.float64) -> np.ndarray:
    """I.i.d. normal draws via the Box-Muller transform of ``rng``'s uniforms."""
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    shape = _check_shape(shape)
    count = int(np.prod(shape))
    pairs = (count + 1) // 2
    u = rng.uniform(2 * pairs).reshape(pairs, 2)
    radius = np.sqrt(-2.0 * np.log(u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1).ravel()[:count]
    return (std * z).reshape(shape).astype(_check_dtype(dtype))


def pixel_shuffle(x: np.ndarray, s: int) -> np.ndarray:
    """Rearrange (n, c*s*s, h, w) into (n, c, s*h, s*w).

    Input channel ``k*s*s + dy*s + dx`` lands at offset (dy, dx) inside each
    s x s output block of channel ``k``.
    """
    check_tensor(x)
    s = int(s)
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    n, c, h, w = x.shape
    if c % (s * s):
        raise ValueError(f"channel count {c} is not divisible by scale**2 = {s * s}")
    y = x.reshape(n, c // (s * s), s, s, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y).reshape(n, c // (s * s), h * s, w * s)


def pixel_unshuffle(x: np.ndarray, s: int) -> np.ndarray:
    """Exact inverse of :func:`pixel_shuffle`."""
    check_tensor(x)
    s = int(s)
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    n, c, hs, ws = x.shape
    if hs % s or ws % s:
        raise ValueError(f"spatial size {hs}x{ws} is not divisible by scale {s}")
    h, w = hs // s, ws // s
    y = x.reshape(n, c, h, s, w, s).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y).reshape(n, c * s * s, h, w)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    check_tensor(a, "a")
    check_tensor(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a - b


def mul_scalar(x: np.ndarray, v: float) -> np.ndarray:
    check_tensor(x)
    return x * x.dtype.type(v)


def mul_elementwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a * b


def concat_channels(parts: Sequence[np.ndarray]) -> np.ndarray:
    if not parts:
        raise ValueError("nothing to concatenate")
    first = check_tensor(parts[0])
    for p in parts[1:]:
        check_tensor(p)
        if p.shape[0] != first.shape[0] or p.shape[2:] != first.shape[2:]:
            raise ValueError(f"shape mismatch: {p.shape} vs {first.shape}")
    return np.concatenate(parts, axis=1)


def split_channels(x: np.ndarray, g: int) -> list[np.ndarray]:
    """Split into ``g`` equal channel groups, preserving order."""
    check_tensor(x)
    if g < 1 or x.shape[1] % g:
        raise ValueError(f"channel count {x.shape[1]} is not divisible by {g}")
    return [part.copy() for part in np.split(x, g, axis=1)]
