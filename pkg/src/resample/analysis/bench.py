"""Latency and memory micro-benchmarks of upsampling operators."""

from __future__ import annotations

import os
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from ..tensor import Rng, randn
from .complexity import count_flops, count_params, op_name

__all__ = ["BenchSpec", "ComplexityReport", "bench", "thread_limit", "REFERENCE_SHAPE"]

REFERENCE_SHAPE = (1, 256, 120, 120)


@dataclass(frozen=True)
class BenchSpec:
    shape: tuple[int, int, int, int] = REFERENCE_SHAPE
    warmup: int = 2
    iters: int = 10
    seed: int = 0
    dtype: str = "float32"
    threads: int = 1

    def __post_init__(self):
        if self.iters < 1 or self.warmup < 0:
            raise ValueError(f"need iters >= 1 and warmup >= 0, got {self.iters}, {self.warmup}")
        if len(self.shape) != 4 or min(self.shape) < 1:
            raise ValueError(f"invalid shape {self.shape}")


@dataclass
class ComplexityReport:
    name: str
    shape: tuple[int, int, int, int]
    scale: int
    param_count: int
    flop_count: int
    latency_median_ns: int
    latency_p95_ns: int
    iters: int
    # peak transient allocation of one call; None when not measured
    memory_delta: Optional[int] = None


def thread_limit(default: int = 1) -> int:
    """Thread cap from RESAMPLE_THREADS, else ``default``."""
    value = os.environ.get("RESAMPLE_THREADS")
    if value is None:
        return default
    n = int(value)
    if n < 1:
        raise ValueError(f"RESAMPLE_THREADS must be >= 1, got {value!r}")
    return n


@contextmanager
def _limited(threads: Optional[int]):
    if threads is None:
        yield
    else:
        with threadpool_limits(limits=threads):
            yield


def _peak_bytes(op, x) -> int:
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base, _ = tracemalloc.get_traced_memory()
        op(x)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak - base


def bench(op, spec: BenchSpec = BenchSpec(), name: Optional[str] = None,
          measure_memory: bool = True) -> ComplexityReport:
    """Time ``op`` on a seeded random input; analytic fields come from the cost model."""
    x = randn(spec.shape, Rng(spec.seed), dtype=spec.dtype)
    times = np.empty(spec.iters, dtype=np.int64)
    with _limited(spec.threads):
        for _ in range(spec.warmup):
            op(x)
        for i in range(spec.iters):
            t0 = time.perf_counter_ns()
            op(x)
            times[i] = time.perf_counter_ns() - t0
        memory = _peak_bytes(op, x) if measure_memory else None
    return ComplexityReport(
        name=name or op_name(op),
        shape=tuple(int(d) for d in spec.shape),
        scale=int(op.scale if hasattr(op, "scale") else op.config.scale),
        param_count=count_params(op),
        flop_count=count_flops(op, spec.shape),
        latency_median_ns=int(np.median(times)),
        latency_p95_ns=int(np.percentile(times, 95, method="higher")),
        iters=spec.iters,
        memory_delta=memory,
    )
