"""
Zero offsets reproduce classic interpolation
============================================

A freshly built upsampler has all-zero offset heads, so it samples exactly
at its initial grid. With the default (bilinear) initial grid that is
bilinear upsampling; with the nearest grid every child sits on its parent.
"""

import numpy as np

from resample import make_variant
from resample.baselines import bilinear_upsample, nearest_upsample
from resample.sampler import make_base_grid
from resample.tensor import Rng, randn

x = randn((1, 64, 6, 6), Rng(0))

# the initial positions of the 2x2 children of pixel (0, 0)
grid = make_base_grid(1, 1, 2)
print("bilinear init x:", grid[0, 0].ravel(), " y:", grid[0, 1].ravel())

for name in ("dysample", "dysample+", "dysample-s", "dysample-s+"):
    up = make_variant(name, 64, 2)
    err = np.abs(up(x) - bilinear_upsample(x, 2)).max()
    same = np.array_equal(make_variant(name, 64, 2, init="nearest")(x), nearest_upsample(x, 2))
    print(f"{name:12s} max |out - bilinear| = {err:.1e}   nearest init exact: {same}")
