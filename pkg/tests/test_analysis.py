import math
from fractions import Fraction

import numpy as np
import pytest

from resample import baselines as B
from resample import dysample as D
from resample.analysis import bench as BE
from resample.analysis import complexity as C
from resample.analysis import gradcheck as G
from resample.analysis import training as TR
from resample.tensor import Rng

from conftest import rand

SHAPE = (1, 256, 120, 120)


def _all_ops(c=256):
    ops = {v: D.make_variant(v, c) for v in D.VARIANTS}
    ops.update(nearest=B.NearestUpsample(), bilinear=B.BilinearUpsample(),
               deconv=B.DeconvUpsample.random(c, Rng(0)),
               pixelshuffle=B.PixelShuffleUpsample.random(c, Rng(0)),
               carafe=B.Carafe.random(c, Rng(0)))
    return ops


# complexity


def test_count_params_matches_enumeration():
    for name, op in _all_ops().items():
        brute = 0
        for arr in op.parameters().values():
            brute += math.prod(arr.shape)
        assert C.count_params(op) == brute, name


def test_table_params_per_stage():
    ops = _all_ops()
    assert C.count_params(ops["dysample"]) == 8192
    assert C.count_params(ops["dysample-s"]) == 1024
    assert C.count_params(ops["bilinear"]) == C.count_params(ops["nearest"]) == 0
    # per-stage values behind the 4-stage totals of 0.3M / 9.4M / 2.4M
    assert C.count_params(ops["carafe"]) == 74148
    assert C.count_params(ops["pixelshuffle"]) == 2360320
    assert C.count_params(ops["deconv"]) == 590080
    for lp, dyn in (("dysample", "dysample+"), ("dysample-s", "dysample-s+")):
        assert C.count_params(ops[dyn]) == 2 * C.count_params(ops[lp])


def test_dysample_flops_closed_form():
    n, c, h, w = SHAPE
    P = 4 * h * w
    got = C.flop_breakdown(D.make_variant("dysample", c), SHAPE)
    assert got == {
        "offset_head": 2 * c * 32 * h * w,
        "scope": 32 * h * w,
        "grid": 2 * 4 * P,
        "sample_weights": 8 * 4 * P,
        "reassembly": 8 * c * P,
    }
    plus = C.flop_breakdown(D.make_variant("dysample+", c), SHAPE)
    assert plus["scope_head"] == plus["offset_head"] == got["offset_head"]
    assert plus["reassembly"] == got["reassembly"]
    assert plus["scope"] == (C.SIGMOID_FLOPS + 2) * 32 * h * w
    pl = C.flop_breakdown(D.make_variant("dysample-s", c), SHAPE)
    assert pl["offset_head"] == 2 * 64 * 16 * P


def test_single_pixel_head_flops():
    m = D.make_variant("dysample", 8, 1)
    assert C.flop_breakdown(m, (1, 8, 1, 1))["offset_head"] == 2 * 8 * 8


def test_carafe_flops_closed_form():
    n, c, h, w = SHAPE
    got = C.flop_breakdown(B.Carafe.random(c, Rng(0)), SHAPE)
    P = 4 * h * w
    assert got == {
        "compressor": 2 * c * 64 * h * w,
        "encoder": 2 * 64 * 100 * 9 * h * w,
        "normalize": C.SOFTMAX_FLOPS * 25 * P,
        "reassembly": 2 * 25 * c * P,
    }


def test_reassembly_ratio():
    dy = D.make_variant("dysample", 256)
    k3 = B.Carafe.random(256, Rng(0), B.CarafeConfig(k_up=3))
    k5 = B.Carafe.random(256, Rng(0))
    assert C.reassembly_ratio(k3, dy, SHAPE) == Fraction(9, 4)
    assert C.reassembly_ratio(k5, dy, SHAPE) == Fraction(25, 4) > Fraction(9, 4)


def test_flops_nonnegative_and_checked():
    for name, op in _all_ops(32).items():
        assert C.count_flops(op, (1, 32, 4, 4)) >= 0, name
    with pytest.raises(ValueError):
        C.count_flops(D.make_variant("dysample", 8), (1, 16, 4, 4))
    with pytest.raises(TypeError):
        C.count_flops(object(), (1, 1, 1, 1))


def test_op_names():
    assert {C.op_name(op) for op in _all_ops().values()} == set(_all_ops())


# gradient oracle


def test_grad_check_constant_function():
    x = rand((1, 2, 2, 2))
    problem = G.GradProblem({"x": x}, lambda: np.zeros((1, 1, 1, 1)), lambda go: {"x": np.zeros_like(x)})
    assert G.grad_check(problem) == 0.0


def test_grad_check_detects_wrong_gradient():
    x = rand((1, 2, 2, 2))
    problem = G.GradProblem({"x": x}, lambda: x * x, lambda go: {"x": go * x})  # missing factor 2
    assert G.grad_check(problem) > 0.3


def test_grad_check_errors():
    x = rand((1, 1, 2, 2))
    ok = G.GradProblem({"x": x}, lambda: x.copy(), lambda go: {"x": go})
    with pytest.raises(ValueError):
        G.grad_check(ok, eps=0)
    bad = G.GradProblem({"x": x}, lambda: x.copy(), lambda go: {"x": go * np.nan})
    with pytest.raises(G.GradCheckError, match="non-finite"):
        G.grad_check(bad)
    shape = G.GradProblem({"x": x}, lambda: x.copy(), lambda go: {"x": go[:, :, :1]})
    with pytest.raises(G.GradCheckError, match="shape"):
        G.grad_check(shape)
    f32 = G.GradProblem({"x": x.astype(np.float32)}, lambda: x, lambda go: {"x": go})
    with pytest.raises(TypeError):
        G.grad_check(f32)


def test_problems_are_seeded():
    a, b = G.make_problem("dysample+", 3), G.make_problem("dysample+", 3)
    assert all(np.array_equal(a.inputs[k], b.inputs[k]) for k in a.inputs)
    with pytest.raises(ValueError):
        G.make_problem("nope", 0)


def test_dysample_problem_away_from_kinks():
    p = G.make_problem("dysample", 1)
    assert set(p.inputs) == {"x", "offset.weight"}
    assert p.inputs["x"].shape == (1, 8, 5, 5)


def test_run_gradcheck_small():
    assert G.run_gradcheck("grid_sample", trials=3) <= G.TOLERANCES["grid_sample"]
    with pytest.raises(ValueError):
        G.run_gradcheck("linear", trials=0)


# benchmark harness


def test_bench_small():
    spec = BE.BenchSpec(shape=(1, 8, 6, 6), warmup=1, iters=5)
    op = D.make_variant("dysample", 8)
    r1, r2 = BE.bench(op, spec), BE.bench(op, spec)
    assert r1.name == "dysample" and r1.scale == 2 and r1.iters == 5
    assert r1.latency_median_ns <= r1.latency_p95_ns
    assert (r1.param_count, r1.flop_count) == (r2.param_count, r2.flop_count)
    assert r1.flop_count == C.count_flops(op, spec.shape)
    assert r1.memory_delta is not None and r1.memory_delta > 0


def test_bench_spec_validation():
    assert BE.BenchSpec().shape == (1, 256, 120, 120)
    with pytest.raises(ValueError):
        BE.BenchSpec(iters=0)
    with pytest.raises(ValueError):
        BE.BenchSpec(shape=(1, 2, 3))


def test_thread_limit(monkeypatch):
    monkeypatch.delenv("RESAMPLE_THREADS", raising=False)
    assert BE.thread_limit(1) == 1
    monkeypatch.setenv("RESAMPLE_THREADS", "3")
    assert BE.thread_limit(1) == 3
    monkeypatch.setenv("RESAMPLE_THREADS", "0")
    with pytest.raises(ValueError):
        BE.thread_limit()


# toy training


def test_task_construction():
    task = TR.make_task(4, scale=2, size=16, seed=0)
    assert task.low.shape == (1, 4, 8, 8) and task.high.shape == (1, 4, 16, 16)
    box = task.high.reshape(1, 4, 8, 2, 8, 2).mean(axis=(3, 5))
    assert np.array_equal(task.low, box)
    # every channel is constant wherever the shared region label is
    flat = task.high[0].reshape(4, -1)
    _, first = np.unique(flat.T, axis=0, return_index=True)
    assert len(first) <= 2 ** 3
    assert np.array_equal(TR.make_task(4, seed=5).high, TR.make_task(4, seed=5).high)
    assert TR.make_task(2, kind="checkerboard", size=14, scale=2).high.shape == (1, 2, 14, 14)
    with pytest.raises(ValueError):
        TR.make_task(2, size=15)
    with pytest.raises(ValueError):
        TR.make_task(2, kind="stripes")


def test_zero_steps_is_bilinear_loss():
    task = TR.make_task(8, size=16)
    losses = TR.toy_fit(D.make_variant("dysample", 8), task, 0, 1.0)
    assert losses.shape == (1,)
    assert abs(losses[0] - task.bilinear_mse()) <= 1e-15


def test_fit_improves():
    task = TR.make_task(8, size=32, seed=1)
    m = D.make_variant("dysample", 8)
    losses = TR.toy_fit(m, task, 60, TR.DEFAULT_LR)
    assert len(losses) == 61
    assert losses[-1] < losses[0]
    assert np.any(m.offset_head.weight != 0)


def test_fit_divergence_raises():
    task = TR.make_task(8, size=16)
    m = D.make_variant("dysample+", 8).randomize(Rng(0), 1.0)
    m.offset_head.weight[...] = 1e308
    with pytest.raises(TR.TrainingDiverged):
        with np.errstate(all="ignore"):
            TR.toy_fit(m, task, 5, 1.0)


def test_fit_argument_checks():
    task = TR.make_task(8, size=16)
    with pytest.raises(ValueError):
        TR.toy_fit(D.make_variant("dysample", 8), task, -1, 0.1)
    with pytest.raises(ValueError):
        TR.toy_fit(D.make_variant("dysample", 8, 4), task, 1, 0.1)
    assert TR.DEFAULT_LR in TR.LR_GRID
