"""
Learning where to sample
========================

A piecewise-constant image is box-downsampled and then upsampled again.
Bilinear interpolation blurs the edges. Training the offset head moves
sampling points away from edges and lowers the reconstruction error.
"""

from resample import make_variant
from resample.analysis.training import DEFAULT_LR, make_task, toy_fit

task = make_task(channels=32, scale=2, size=64, seed=0)
print(f"fixed bilinear MSE: {task.bilinear_mse():.5f}")

for name in ("dysample", "dysample-s+"):
    losses = toy_fit(make_variant(name, 32), task, steps=300, lr=DEFAULT_LR)
    print(f"{name:12s} step 0 {losses[0]:.5f}  step 100 {losses[100]:.5f}  step 300 {losses[-1]:.5f}")
