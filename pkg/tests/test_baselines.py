import numpy as np
import pytest
from hypothesis import given, strategies as st

from resample import baselines as B
from resample.analysis.complexity import count_params
from resample.analysis.gradcheck import grad_check, make_problem
from resample.tensor import Rng

from conftest import rand


def test_scale_one_identity():
    x = rand((1, 2, 3, 4))
    assert np.array_equal(B.nearest_upsample(x, 1), x)
    assert np.array_equal(B.bilinear_upsample(x, 1), x)


def test_nearest_single_pixel():
    assert np.array_equal(B.nearest_upsample(np.full((1, 1, 1, 1), 2.0), 2), np.full((1, 1, 2, 2), 2.0))


def test_bilinear_row():
    x = np.array([0.0, 1.0]).reshape(1, 1, 1, 2)
    assert B.bilinear_upsample(x, 2)[0, 0, 0].tolist() == [0.0, 0.25, 0.75, 1.0]


def test_bilinear_half_pixel_formula():
    # output j reads source (j + 0.5)/s - 0.5, clamped; checked on a ramp
    x = np.arange(5.0).reshape(1, 1, 1, 5)
    out = B.bilinear_upsample(x, 4)[0, 0, 0]
    src = np.clip((np.arange(20) + 0.5) / 4 - 0.5, 0, 4)
    assert np.allclose(out, src, atol=1e-15)


def test_bad_scale():
    with pytest.raises(ValueError):
        B.bilinear_upsample(rand((1, 1, 2, 2)), 0)


def test_learned_baseline_shapes():
    x = rand((1, 8, 5, 5))
    assert B.DeconvUpsample.random(8, Rng(0))(x).shape == (1, 8, 10, 10)
    assert B.PixelShuffleUpsample.random(8, Rng(0))(x).shape == (1, 8, 10, 10)


@pytest.mark.parametrize("c", [1, 8, 256])
def test_pixelshuffle_param_count(c):
    assert count_params(B.PixelShuffleUpsample.random(c, Rng(0))) == 3 * 3 * c * 4 * c + 4 * c


def test_carafe_shape():
    op = B.Carafe.random(16, Rng(0))
    assert op(rand((1, 16, 6, 6))).shape == (1, 16, 12, 12)


def _uniform_carafe(c, cfg):
    op = B.Carafe.random(c, Rng(1), cfg)
    op.weights.encoder.weight[...] = 0
    op.weights.encoder.bias[...] = 0
    return op


@pytest.mark.parametrize("k_up", [3, 5])
def test_carafe_uniform_kernels_average_window(k_up):
    cfg = B.CarafeConfig(scale=2, k_up=k_up)
    x = rand((1, 3, 4, 5))
    out = _uniform_carafe(3, cfg)(x)
    r = k_up // 2
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r)))
    for i in range(8):
        for j in range(10):
            window = xp[0, :, i // 2:i // 2 + k_up, j // 2:j // 2 + k_up]
            assert np.allclose(out[0, :, i, j], window.mean(axis=(1, 2)), atol=1e-14)


def test_carafe_constant_interior():
    cfg = B.CarafeConfig(scale=2, k_up=5, c_mid=8)
    op = B.Carafe.random(4, Rng(2), cfg)
    op.weights.encoder.weight *= 5  # sharper, still normalised kernels
    out = op(np.full((1, 4, 7, 7), 1.75))
    # output rows/cols whose source window stays inside the image
    assert np.allclose(out[:, :, 4:10, 4:10], 1.75, atol=1e-14)


@given(st.integers(0, 10**6))
def test_carafe_interior_convex(seed):
    cfg = B.CarafeConfig(scale=2, k_up=3, c_mid=4)
    op = B.Carafe.random(2, Rng(seed), cfg)
    x = rand((1, 2, 5, 5), seed)
    out = op(x)[:, :, 2:8, 2:8]
    assert out.min() >= x.min() - 1e-12 and out.max() <= x.max() + 1e-12


def test_carafe_kernels_normalised():
    cfg = B.CarafeConfig()
    k = B.carafe_kernels(cfg, B.CarafeWeights.random(cfg, 6, Rng(0)), rand((1, 6, 3, 3)))
    assert k.shape == (1, 25, 6, 6)
    assert np.allclose(k.sum(axis=1), 1, atol=1e-12)


def test_carafe_validation():
    with pytest.raises(ValueError):
        B.CarafeConfig(k_up=4)
    with pytest.raises(ValueError):
        B.CarafeConfig(c_mid=0)
    cfg = B.CarafeConfig()
    w = B.CarafeWeights.random(B.CarafeConfig(k_up=3), 4, Rng(0))
    with pytest.raises(ValueError):
        B.carafe_upsample(cfg, w, rand((1, 4, 3, 3)))
    with pytest.raises(ValueError):
        B.carafe_reassemble(rand((1, 2, 3, 3)), np.zeros((1, 9, 5, 6)), 3, 2)


def test_carafe_default_param_count():
    # compressor 256*64 + 64, encoder 64*100*9 + 100
    assert count_params(B.Carafe.random(256, Rng(0))) == 256 * 64 + 64 + 64 * 100 * 9 + 100 == 74148


def test_carafe_gradcheck():
    assert grad_check(make_problem("carafe_encoder", 0)) <= 1e-5
    assert grad_check(make_problem("carafe", 0)) <= 1e-4


def test_baselines_deterministic():
    x = rand((1, 4, 3, 3))
    for factory in (lambda: B.Carafe.random(4, Rng(3)), lambda: B.DeconvUpsample.random(4, Rng(3)),
                    lambda: B.PixelShuffleUpsample.random(4, Rng(3))):
        assert np.array_equal(factory()(x), factory()(x))
