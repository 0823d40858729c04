"""Learned point-sampling upsampling on NCHW numpy arrays.

Subpackages and modules:

* :mod:`resample.tensor` -- array constructors, seeded RNG, pixel shuffle
* :mod:`resample.sampler` -- bilinear grid sampling and its backward pass
* :mod:`resample.layers` -- linear/conv/deconv layers, activations, SGD
* :mod:`resample.dysample` -- the dynamic upsampler and its named variants
* :mod:`resample.baselines` -- nearest, bilinear, deconv, pixel shuffle, CARAFE
* :mod:`resample.analysis` -- cost model, gradient checks, benchmarks, toy fit
* :mod:`resample.io` -- NPY tensors, weight directories, report files
"""

from .dysample import VARIANTS, make_variant
from .tensor import Rng

__version__ = "0.1.0"

__all__ = ["VARIANTS", "make_variant", "Rng", "__version__"]
