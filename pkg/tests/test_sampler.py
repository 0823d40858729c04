import numpy as np
import pytest
from hypothesis import given, strategies as st

from resample.baselines import bilinear_upsample, nearest_upsample
from resample.sampler import InitMode, grid_sample, grid_sample_backward, make_base_grid
from resample.analysis.gradcheck import grad_check, make_problem

from conftest import rand


def bilinear_at(img, x, y):
    """Brute-force clamped bilinear lookup at one point of a 2-D image."""
    h, w = img.shape
    x, y = min(max(x, 0), w - 1), min(max(y, 0), h - 1)
    total = 0.0
    for i in range(h):
        for j in range(w):
            total += img[i, j] * max(0, 1 - abs(x - j)) * max(0, 1 - abs(y - i))
    return total


def test_base_grid_bilinear_closed_form():
    g = make_base_grid(1, 1, 2, InitMode.BILINEAR)
    assert g.shape == (1, 2, 2, 2)
    assert g[0, 0].tolist() == [[-0.25, 0.25], [-0.25, 0.25]]
    assert g[0, 1].tolist() == [[-0.25, -0.25], [0.25, 0.25]]


def test_base_grid_nearest():
    g = make_base_grid(1, 1, 2, "nearest")
    assert np.array_equal(g, np.zeros((1, 2, 2, 2)))
    g = make_base_grid(2, 3, 2, "nearest")
    assert g[0, 0, 0].tolist() == [0, 0, 1, 1, 2, 2]


@pytest.mark.parametrize("mode", list(InitMode))
def test_base_grid_scale_one_is_identity(mode):
    g = make_base_grid(3, 4, 1, mode)
    yy, xx = np.mgrid[0:3, 0:4]
    assert np.array_equal(g[0, 0], xx) and np.array_equal(g[0, 1], yy)


def test_base_grid_rejects_bad_scale():
    with pytest.raises(ValueError):
        make_base_grid(2, 2, 0)


def test_identity_grid_exact():
    x = rand((2, 3, 4, 5))
    assert np.array_equal(grid_sample(x, make_base_grid(4, 5, 1)), x)


def test_single_pixel_input_is_constant():
    x = np.full((1, 2, 1, 1), 7.25)
    grid = rand((1, 2, 3, 3), seed=3, std=4.0)
    assert np.all(grid_sample(x, grid) == 7.25)


def test_center_of_2x2():
    x = np.array([[[[0.0, 1.0], [2.0, 3.0]]]])
    grid = np.array([0.5, 0.5]).reshape(1, 2, 1, 1)
    assert grid_sample(x, grid)[0, 0, 0, 0] == 1.5


def test_matches_brute_force_with_clamp():
    x = rand((1, 1, 3, 4), seed=5)
    grid = rand((1, 2, 5, 5), seed=6, std=3.0)
    out = grid_sample(x, grid)
    for i in range(5):
        for j in range(5):
            ref = bilinear_at(x[0, 0], grid[0, 0, i, j], grid[0, 1, i, j])
            assert abs(out[0, 0, i, j] - ref) < 1e-12


def test_groups_use_their_own_coordinates():
    x = rand((1, 4, 3, 3), seed=1)
    grid = rand((1, 4, 2, 2), seed=2)
    out = grid_sample(x, grid)
    assert np.array_equal(out[:, :2], grid_sample(x[:, :2], grid[:, :2]))
    assert np.array_equal(out[:, 2:], grid_sample(x[:, 2:], grid[:, 2:]))


def test_group_mismatch_errors():
    with pytest.raises(ValueError):
        grid_sample(rand((1, 3, 2, 2)), rand((1, 4, 2, 2)))
    with pytest.raises(ValueError):
        grid_sample(rand((1, 2, 2, 2)), rand((1, 3, 2, 2)))
    with pytest.raises(ValueError):
        grid_sample_backward(rand((1, 2, 2, 2)), rand((1, 2, 2, 2)), rand((1, 2, 3, 3)))


@given(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 2, 3, 4]), st.integers(0, 10**6))
def test_base_grids_match_baselines(h, w, s, seed):
    x = rand((2, 3, h, w), seed)
    assert np.max(np.abs(grid_sample(x, make_base_grid(h, w, s)) - bilinear_upsample(x, s))) <= 1e-12
    assert np.array_equal(grid_sample(x, make_base_grid(h, w, s, "nearest")), nearest_upsample(x, s))


@given(st.integers(0, 10**6))
def test_convex_and_linear(seed):
    x1, x2 = rand((1, 2, 4, 4), seed), rand((1, 2, 4, 4), seed + 1)
    grid = rand((1, 2, 3, 5), seed + 2, std=3.0)
    out = grid_sample(x1, grid)
    assert out.min() >= x1.min() - 1e-15 and out.max() <= x1.max() + 1e-15
    lhs = grid_sample(2.5 * x1 - 0.5 * x2, grid)
    rhs = 2.5 * out - 0.5 * grid_sample(x2, grid)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_backward_constant_field_and_identity():
    grid = rand((1, 2, 3, 3), seed=9)
    go = rand((1, 2, 3, 3), seed=10)
    _, gg = grid_sample_backward(np.full((1, 2, 4, 4), 3.0), grid, go)
    assert np.all(gg == 0)
    x = rand((1, 2, 4, 5))
    gx, _ = grid_sample_backward(x, make_base_grid(4, 5, 1), rand((1, 2, 4, 5), seed=3))
    assert np.array_equal(gx, rand((1, 2, 4, 5), seed=3))


def test_backward_clamped_component_has_zero_gradient():
    x = rand((1, 1, 3, 3))
    grid = np.array([-2.0, 1.3, 0.7, 5.0]).reshape(1, 2, 1, 2)
    _, gg = grid_sample_backward(x, grid, np.ones((1, 1, 1, 2)))
    assert gg[0, 0, 0, 0] == 0 and gg[0, 1, 0, 1] == 0
    assert gg[0, 1, 0, 0] != 0 and gg[0, 0, 0, 1] != 0


def test_broadcast_grid_gradient_sums_batch():
    x = rand((3, 2, 3, 3))
    grid = rand((1, 2, 2, 2), seed=4)
    go = rand((3, 2, 2, 2), seed=5)
    _, gg = grid_sample_backward(x, grid, go)
    full = np.repeat(grid, 3, axis=0)
    _, gg_full = grid_sample_backward(x, full, go)
    assert np.allclose(gg, gg_full.sum(axis=0, keepdims=True), atol=1e-14)


def test_backward_gradcheck():
    assert grad_check(make_problem("grid_sample", 0)) <= 1e-5


def test_float32_forward():
    x = rand((1, 2, 3, 3), dtype=np.float32)
    out = grid_sample(x, make_base_grid(3, 3, 2, dtype=np.float32))
    assert out.dtype == np.float32
    assert np.allclose(out, bilinear_upsample(x.astype(np.float64), 2), atol=1e-6)


def test_non_finite_grid_rejected():
    grid = np.array([np.inf, 0.0]).reshape(1, 2, 1, 1)
    with pytest.raises(FloatingPointError):
        grid_sample(rand((1, 1, 2, 2)), grid)
