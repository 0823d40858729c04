"""Command-line front end: ``resample <command> [flags]``.

Every command also accepts ``--config FILE``: a text file of ``key=value``
lines whose keys are that command's long flag names (dashes or underscores).
Flags given on the command line take precedence over the file.

Exit codes: 0 success, 2 usage error, 3 data or shape error, 4 check failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from contextlib import nullcontext
from typing import Optional, Sequence

from threadpoolctl import threadpool_limits

from . import baselines, dysample, io
from .analysis import gradcheck, training
from .analysis.bench import REFERENCE_SHAPE, BenchSpec, bench, thread_limit
from .analysis.complexity import count_params
from .sampler import make_base_grid
from .tensor import Rng

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 2, 3, 4

OPS = ("nearest", "bilinear", "deconv", "pixelshuffle", "carafe", *dysample.VARIANTS)
BENCH_DEFAULT = (*dysample.VARIANTS, "bilinear", "carafe")
PRESETS = {"fpn4": 4, "segformer6": 6, "pfpn3": 3}
TABLE_CHANNELS = 256
TABLE_SCALE = 2


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


def build_operator(name: str, channels: int, scale: int = 2, seed: int = 0):
    """Operator by name. Learned baselines get seeded random weights; the
    upsampler variants start from their zero initialisation."""
    rng = Rng(seed)
    if name in dysample.VARIANTS:
        return dysample.make_variant(name, channels, scale)
    if name == "nearest":
        return baselines.NearestUpsample(scale)
    if name == "bilinear":
        return baselines.BilinearUpsample(scale)
    if name == "deconv":
        if scale != 2:
            raise UsageError("deconv is defined for scale 2 only")
        return baselines.DeconvUpsample.random(channels, rng)
    if name == "pixelshuffle":
        return baselines.PixelShuffleUpsample.random(channels, rng, scale)
    if name == "carafe":
        return baselines.Carafe.random(channels, rng, baselines.CarafeConfig(scale=scale))
    raise UsageError(f"unknown op {name!r}; valid ops: {', '.join(OPS)}")


def table_params(preset: str, baselines: bool = False) -> dict[str, int]:
    """Parameter increment of each variant summed over the preset's stages.

    With ``baselines`` the learned baseline upsamplers are appended.
    """
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; valid presets: {', '.join(PRESETS)}")
    names = list(dysample.VARIANTS) + (["deconv", "pixelshuffle", "carafe"] if baselines else [])
    stages = PRESETS[preset]
    return {name: stages * count_params(build_operator(name, TABLE_CHANNELS, TABLE_SCALE))
            for name in names}


def _ints(text: str, count: Optional[int] = None) -> tuple[int, ...]:
    try:
        values = tuple(int(t) for t in str(text).split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if count is not None and len(values) != count:
        raise UsageError(f"expected {count} comma-separated integers, got {text!r}")
    return values


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _thread_scope():
    # bench pins its own threads; elsewhere only an explicit cap applies
    if "RESAMPLE_THREADS" in os.environ:
        return threadpool_limits(limits=thread_limit())
    return nullcontext()


# commands


def cmd_upsample(args) -> int:
    _require(args, "input", "out", "op")
    if args.op not in OPS:
        raise UsageError(f"unknown op {args.op!r}; valid ops: {', '.join(OPS)}")
    x = io.read_tensor(args.input)
    op = build_operator(args.op, x.shape[1], args.scale, args.seed)
    if args.weights:
        io.load_weights(args.weights, op.parameters())
    io.write_tensor(args.out, op(x))
    return EXIT_OK


def cmd_bench(args) -> int:
    names = [n.strip() for n in args.op.split(",") if n.strip()]
    for name in names:
        if name not in OPS:
            raise UsageError(f"unknown op {name!r}; valid ops: {', '.join(OPS)}")
    shape = _ints(args.shape, 4)
    spec = BenchSpec(shape=shape, warmup=args.warmup, iters=args.iters, seed=args.seed,
                     threads=thread_limit(1))
    reports = [bench(build_operator(n, shape[1], args.scale, args.seed), spec, n) for n in names]
    if args.out:
        io.write_report_csv(args.out, reports)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(io.REPORT_COLUMNS)
        for r in reports:
            writer.writerow([r.name, *r.shape, r.scale, r.param_count, r.flop_count,
                             r.latency_median_ns, r.latency_p95_ns])
    if args.json:
        io.write_report_json(args.json, reports)
    return EXIT_OK


def cmd_tables(args) -> int:
    params = table_params(args.preset, args.baselines)
    print(f"# {args.preset}: {PRESETS[args.preset]} stages, C={TABLE_CHANNELS}, s={TABLE_SCALE}")
    for name, count in params.items():
        print(f"{name}\t{count}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.op not in gradcheck.PROBLEMS:
        raise UsageError(f"unknown op {args.op!r}; valid ops: {', '.join(gradcheck.PROBLEMS)}")
    tol = gradcheck.TOLERANCES[args.op]
    err = gradcheck.run_gradcheck(args.op, args.trials, args.seed)
    verdict = "PASS" if err <= tol else "FAIL"
    print(f"{verdict} {args.op} max_rel_err={err:.3e} tol={tol:.0e} trials={args.trials}")
    if verdict == "FAIL":
        raise CheckFailed(f"{args.op} gradient error {err:.3e} exceeds {tol:.0e}")
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.variant not in dysample.VARIANTS:
        raise UsageError(f"unknown variant {args.variant!r}; valid: {', '.join(dysample.VARIANTS)}")
    if not args.lr > 0:
        raise UsageError("--lr must be positive")
    task = training.make_task(args.channels, args.scale, args.size, args.seed, args.task)
    module = dysample.make_variant(args.variant, args.channels, args.scale)
    try:
        losses = training.toy_fit(module, task, args.steps, args.lr)
    except training.TrainingDiverged as exc:
        raise CheckFailed(str(exc)) from None
    baseline = task.bilinear_mse()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "mse"])
            writer.writerows((i, repr(float(v))) for i, v in enumerate(losses))
    if args.save_weights:
        io.save_weights(args.save_weights, module.parameters())
    print(f"{args.variant} steps={args.steps} lr={args.lr} bilinear_mse={baseline:.6g} "
          f"initial_mse={losses[0]:.6g} final_mse={losses[-1]:.6g}")
    return EXIT_OK


def _svg(points, arrows, width, height, unit) -> str:
    def p(v):
        return f"{v * unit:.3f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * unit:.0f}" '
           f'height="{height * unit:.0f}" viewBox="0 0 {width * unit:.0f} {height * unit:.0f}">',
           '<defs><marker id="head" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="4" '
           'markerHeight="4" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#c0392b"/></marker></defs>',
           '<rect width="100%" height="100%" fill="white"/>']
    for x, y in points:
        out.append(f'<circle class="source" cx="{p(x)}" cy="{p(y)}" r="3" fill="#2c3e50"/>')
    for (x0, y0), (x1, y1) in arrows:
        out.append(f'<circle class="child" cx="{p(x0)}" cy="{p(y0)}" r="2" fill="#2980b9"/>')
        out.append(f'<line class="offset" x1="{p(x0)}" y1="{p(y0)}" x2="{p(x1)}" y2="{p(y1)}" '
                   'stroke="#c0392b" stroke-width="1" marker-end="url(#head)"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_viz(args) -> int:
    _require(args, "input", "out")
    if args.variant not in dysample.VARIANTS:
        raise UsageError(f"unknown variant {args.variant!r}; valid: {', '.join(dysample.VARIANTS)}")
    x = io.read_tensor(args.input)[:1]
    module = dysample.make_variant(args.variant, x.shape[1], args.scale)
    if args.weights:
        io.load_weights(args.weights, module.parameters())
    y0, x0, ch, cw = _ints(args.crop, 4)
    _, _, h, w = x.shape
    if not (0 <= y0 < h and 0 <= x0 < w and ch >= 1 and cw >= 1):
        raise ValueError(f"crop {args.crop} lies outside the {h}x{w} input")
    ch, cw = min(ch, h - y0), min(cw, w - x0)
    groups = module.config.groups
    if not 0 <= args.group < groups:
        raise UsageError(f"--group must be in [0, {groups})")
    s = args.scale
    base = make_base_grid(h, w, s)
    coords = dysample.build_sampling_set(dysample.generate_offsets(module, x), base)
    gx, gy = coords[0, 2 * args.group], coords[0, 2 * args.group + 1]
    bx, by = base[0, 0], base[0, 1]
    points = [(j - x0 + 0.5, i - y0 + 0.5) for i in range(y0, y0 + ch) for j in range(x0, x0 + cw)]
    arrows = []
    for i in range(y0 * s, (y0 + ch) * s):
        for j in range(x0 * s, (x0 + cw) * s):
            start = (bx[i, j] - x0 + 0.5, by[i, j] - y0 + 0.5)
            end = (gx[i, j] - x0 + 0.5, gy[i, j] - y0 + 0.5)
            arrows.append((start, end))
    with open(args.out, "w") as fh:
        fh.write(_svg(points, arrows, cw, ch, args.unit))
    return EXIT_OK


# argument parsing


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resample", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value file of defaults for this command")
        p.set_defaults(func=func)
        return p

    p = command("upsample", cmd_upsample, "upsample a tensor file")
    p.add_argument("--in", dest="input", help="input NPY tensor")
    p.add_argument("--out", help="output NPY tensor")
    p.add_argument("--op", help=f"one of {', '.join(OPS)}")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", help="weights directory (with manifest.txt)")

    p = command("bench", cmd_bench, "time operators and report their costs")
    p.add_argument("--op", default=",".join(BENCH_DEFAULT), help="comma-separated op names")
    p.add_argument("--shape", default=",".join(map(str, REFERENCE_SHAPE)), help="N,C,H,W")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--json", help="also write a JSON report here")

    p = command("tables", cmd_tables, "parameter increments for a network preset")
    p.add_argument("--preset", default="fpn4", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--baselines", action="store_true", help="also list deconv, pixelshuffle and carafe")

    p = command("gradcheck", cmd_gradcheck, "finite-difference check of a backward pass")
    p.add_argument("--op", default="dysample", help=f"one of {', '.join(gradcheck.PROBLEMS)}")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    p = command("fit", cmd_fit, "train a variant on the toy edge task")
    p.add_argument("--variant", default="dysample")
    p.add_argument("--steps", type=int, default=training.DEFAULT_STEPS)
    p.add_argument("--lr", type=float, default=training.DEFAULT_LR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--task", default="edges", help="edges or checkerboard")
    p.add_argument("--out", help="loss-curve CSV path")
    p.add_argument("--save-weights", help="directory to store the trained weights")

    p = command("viz", cmd_viz, "SVG of the sampling offsets")
    p.add_argument("--in", dest="input", help="input NPY tensor")
    p.add_argument("--weights", help="weights directory (default: fresh weights)")
    p.add_argument("--out", help="output SVG")
    p.add_argument("--variant", default="dysample")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--crop", default="0,0,8,8", help="y0,x0,h,w in input pixels")
    p.add_argument("--group", type=int, default=0)
    p.add_argument("--unit", type=float, default=40.0, help="SVG pixels per input pixel")
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise KeyError(command)


def read_config(path: str) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    dests = {a.dest: a for a in sub._actions if a.option_strings and a.dest not in ("help", "config")}
    # "--in" is stored as "input"
    aliases = {s.lstrip("-").replace("-", "_"): a.dest for a in dests.values() for s in a.option_strings}
    defaults = {}
    for key, value in values.items():
        if key not in aliases:
            raise UsageError(f"unknown config key {key!r}; valid keys: {', '.join(sorted(aliases))}")
        action = dests[aliases[key]]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[action.dest] = value.lower() in ("true", "1", "yes")
        else:
            defaults[action.dest] = value  # string defaults go through the flag's type
    sub.set_defaults(**defaults)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = _parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config(args.config)
        except OSError as exc:
            parser.error(f"cannot read config: {exc}")
        except UsageError as exc:
            parser.error(str(exc))
        sub = _subparser(parser, args.command)
        try:
            _apply_config(sub, values)
        except UsageError as exc:
            sub.error(str(exc))
        args = parser.parse_args(argv)
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        with nullcontext() if args.command == "bench" else _thread_scope():
            return args.func(args)
    except UsageError as exc:
        print(f"resample {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckFailed as exc:
        print(f"resample {args.command}: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ValueError, TypeError, OSError, KeyError) as exc:
        print(f"resample {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
