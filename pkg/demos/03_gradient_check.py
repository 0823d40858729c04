"""
Checking the hand-written backward passes
=========================================

Every backward pass is compared against central differences in float64.
Sampling points are kept away from integer coordinates, where bilinear
interpolation has kinks.
"""

from resample.analysis.gradcheck import TOLERANCES, run_gradcheck

for op in ("grid_sample", "linear", "conv", "deconv", "dysample", "dysample-s+"):
    err = run_gradcheck(op, trials=3)
    print(f"{op:12s} max relative error {err:.2e}  (tolerance {TOLERANCES[op]:.0e})")
