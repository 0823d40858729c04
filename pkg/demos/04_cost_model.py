"""
FLOPs, parameters and latency
=============================

The cost model counts a multiply-add as two FLOPs. Bilinear reassembly
reads 2x2 neighbours, CARAFE reads k x k, hence the 9/4 ratio at k=3.
Timings below use a small map so the script runs quickly; the CLI
``resample bench`` uses 1x256x120x120.
"""

from resample import make_variant
from resample.analysis.bench import BenchSpec, bench
from resample.analysis.complexity import flop_breakdown, reassembly_ratio
from resample.baselines import BilinearUpsample, Carafe, CarafeConfig
from resample.tensor import Rng

shape = (1, 256, 120, 120)
dy = make_variant("dysample", 256)
for k in (3, 5):
    carafe = Carafe.random(256, Rng(0), CarafeConfig(k_up=k))
    print(f"CARAFE k_up={k} / DySample reassembly FLOPs = {reassembly_ratio(carafe, dy, shape)}")

print("DySample+ stages:", flop_breakdown(make_variant("dysample+", 256), shape))

spec = BenchSpec(shape=(1, 64, 48, 48), warmup=1, iters=5)
for op in (BilinearUpsample(2), make_variant("dysample", 64), make_variant("dysample-s", 64),
           Carafe.random(64, Rng(0))):
    r = bench(op, spec)
    print(f"{r.name:12s} params {r.param_count:>7d}  GFLOPs {r.flop_count / 1e9:.3f}  "
          f"median {r.latency_median_ns / 1e6:.2f} ms")
