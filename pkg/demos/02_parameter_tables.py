"""
Parameter increments per network
================================

Each upsampling stage of a detector or segmenter works on 256 channels at
scale 2. Summing one upsampler per stage gives the extra parameters.
"""

from resample.cli import PRESETS, table_params

for preset, stages in PRESETS.items():
    print(f"{preset} ({stages} stages)")
    for name, count in table_params(preset, baselines=True).items():
        print(f"  {name:13s} {count:>10,d}")
