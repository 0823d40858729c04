"""NPY v1.0 tensor files and benchmark report serialisation.

Only what the rest of the package needs is supported: little-endian
float32/float64, C order, rank 4. Files written here load with
``numpy.load`` and vice versa.
"""

from __future__ import annotations

import ast
import csv
import dataclasses
import json
import os
import struct
from typing import Iterable, Sequence

import numpy as np

from .tensor import check_tensor

__all__ = [
    "NpyFormatError",
    "write_tensor",
    "read_tensor",
    "encode_tensor",
    "decode_tensor",
    "REPORT_COLUMNS",
    "write_report_csv",
    "write_report_json",
    "read_report_json",
    "MANIFEST",
    "save_weights",
    "load_weights",
]

MAGIC = b"\x93NUMPY"
_ALIGN = 64
_DESCR = {np.dtype("<f4"): "<f4", np.dtype("<f8"): "<f8"}


class NpyFormatError(ValueError):
    """Malformed tensor file; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def encode_tensor(x: np.ndarray) -> bytes:
    check_tensor(x)
    dtype = x.dtype.newbyteorder("<")
    descr = _DESCR[dtype]
    header = "{'descr': '%s', 'fortran_order': False, 'shape': (%s), }" % (
        descr, ", ".join(str(d) for d in x.shape))
    # magic(6) + version(2) + length(2) + header + padding + newline
    total = 10 + len(header) + 1
    header += " " * ((-total) % _ALIGN) + "\n"
    prefix = MAGIC + bytes([1, 0]) + struct.pack("<H", len(header))
    payload = np.ascontiguousarray(x, dtype=dtype).tobytes()
    return prefix + header.encode("latin1") + payload


def decode_tensor(data: bytes) -> np.ndarray:
    if data[:6] != MAGIC:
        raise NpyFormatError(f"bad magic string {data[:6]!r}", 0)
    if len(data) < 10:
        raise NpyFormatError("file too short for a header", len(data))
    if data[6:8] != bytes([1, 0]):
        raise NpyFormatError(f"unsupported version {data[6]}.{data[7]}, expected 1.0", 6)
    (hlen,) = struct.unpack("<H", data[8:10])
    start = 10 + hlen
    if len(data) < start:
        raise NpyFormatError(f"header claims {hlen} bytes but only {len(data) - 10} remain", 10)
    try:
        header = ast.literal_eval(data[10:start].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError(f"unparseable header: {exc}", 10) from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"header must have exactly descr/fortran_order/shape, got {header!r}", 10)
    if header["descr"] not in ("<f4", "<f8"):
        raise NpyFormatError(f"unsupported dtype {header['descr']!r}", 10)
    if header["fortran_order"] is not False:
        raise NpyFormatError("fortran_order must be False", 10)
    shape = header["shape"]
    if not isinstance(shape, tuple) or len(shape) != 4 or not all(isinstance(d, int) and d >= 1 for d in shape):
        raise NpyFormatError(f"shape must be four positive ints, got {shape!r}", 10)
    dtype = np.dtype(header["descr"])
    expected = int(np.prod(shape)) * dtype.itemsize
    actual = len(data) - start
    if actual != expected:
        raise NpyFormatError(f"payload has {actual} bytes, expected {expected}", start)
    return np.frombuffer(data, dtype=dtype, offset=start).reshape(shape).astype(dtype.newbyteorder("="))


def write_tensor(path: str | os.PathLike, x: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(x))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())


REPORT_COLUMNS = ("name", "n", "c", "h", "w", "s", "params", "flops",
                  "latency_median_ns", "latency_p95_ns")


def _report_row(report) -> dict:
    n, c, h, w = report.shape
    return {
        "name": report.name, "n": n, "c": c, "h": h, "w": w, "s": report.scale,
        "params": report.param_count, "flops": report.flop_count,
        "latency_median_ns": report.latency_median_ns, "latency_p95_ns": report.latency_p95_ns,
    }


def write_report_csv(path: str | os.PathLike, reports: Sequence) -> None:
    if not reports:
        raise ValueError("no reports to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerow(_report_row(report))


def write_report_json(path: str | os.PathLike, reports: Iterable) -> None:
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to write")
    doc = {"flop_convention": "multiply-add = 2 FLOPs",
           "reports": [dataclasses.asdict(r) for r in reports]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report_json(path: str | os.PathLike) -> list[dict]:
    with open(path) as fh:
        return json.load(fh)["reports"]


# Weights directory: one rank-4 NPY file per parameter plus a manifest whose
# lines read "<parameter name> <file name>". Matrices are stored as
# (out, in, 1, 1) and vectors as (1, c, 1, 1).

MANIFEST = "manifest.txt"


def _as_rank4(p: np.ndarray) -> np.ndarray:
    if p.ndim == 4:
        return p
    if p.ndim == 2:
        return p[:, :, None, None]
    if p.ndim == 1:
        return p[None, :, None, None]
    raise ValueError(f"cannot store a rank-{p.ndim} parameter")


def save_weights(directory: str | os.PathLike, params: dict[str, np.ndarray]) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = []
    for name in sorted(params):
        if any(ch.isspace() for ch in name):
            raise ValueError(f"parameter name {name!r} contains whitespace")
        fname = name.replace("/", "_") + ".npy"
        write_tensor(os.path.join(directory, fname), _as_rank4(params[name]))
        lines.append(f"{name} {fname}\n")
    with open(os.path.join(directory, MANIFEST), "w") as fh:
        fh.writelines(lines)


def load_weights(directory: str | os.PathLike, params: dict[str, np.ndarray]) -> None:
    """Fill ``params`` in place from a weights directory.

    The manifest must list exactly the parameters of ``params``.
    """
    entries = {}
    with open(os.path.join(directory, MANIFEST)) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{MANIFEST} line {lineno}: expected '<name> <file>', got {line.rstrip()!r}")
            entries[parts[0]] = parts[1]
    if set(entries) != set(params):
        missing = sorted(set(params) - set(entries))
        extra = sorted(set(entries) - set(params))
        raise ValueError(f"weights do not match the operator: missing {missing}, unexpected {extra}")
    for name, fname in entries.items():
        target = params[name]
        value = read_tensor(os.path.join(directory, fname))
        if value.shape != _as_rank4(target).shape:
            raise ValueError(f"{name}: stored shape {value.shape}, expected {_as_rank4(target).shape}")
        target[...] = value.reshape(target.shape)
