"""
Files, weights and an offset picture
====================================

Tensors are stored as NPY files and weights as a directory of NPY files
listed in manifest.txt. The ``viz`` command draws, for each input pixel,
arrows from the initial child positions to the learned sampling points.
"""

import tempfile
from pathlib import Path

from resample import cli, io
from resample.analysis.training import make_task

work = Path(tempfile.mkdtemp())
task = make_task(channels=32, size=32, seed=1)
io.write_tensor(work / "low.npy", task.low)

cli.main(["fit", "--variant", "dysample", "--channels", "32", "--size", "32", "--seed", "1",
          "--steps", "150", "--out", str(work / "loss.csv"), "--save-weights", str(work / "weights")])
print((work / "weights" / "manifest.txt").read_text(), end="")

cli.main(["upsample", "--in", str(work / "low.npy"), "--out", str(work / "high.npy"),
          "--op", "dysample", "--weights", str(work / "weights")])
print("upsampled:", io.read_tensor(work / "high.npy").shape)

cli.main(["viz", "--in", str(work / "low.npy"), "--weights", str(work / "weights"),
          "--out", str(work / "offsets.svg"), "--crop", "4,4,6,6"])
print("picture written to", work / "offsets.svg")
