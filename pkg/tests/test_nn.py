import numpy as np
import pytest

from gesturedet import nn


def central_diff(f, x, h=1e-5):
    """Finite-difference gradient of scalar f at array x, element by element."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        hi = f()
        x[idx] = orig - h
        lo = f()
        x[idx] = orig
        g[idx] = (hi - lo) / (2 * h)
        it.iternext()
    return g


def rel_err(a, b):
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
    return (np.abs(a - b) / denom).max()


def test_conv_scalar_multiply():
    x = np.array([[[[2.0]]]])
    w = np.array([[[[3.0]]]])
    b = np.zeros(1)
    assert nn.conv2d(x, w, b).item() == 6.0


def test_depthwise_all_ones_box_sum():
    x = np.ones((1, 3, 3, 1))
    w = np.ones((3, 3, 1))
    b = np.zeros(1)
    y = nn.depthwise_conv2d(x, w, b)[0, :, :, 0]
    assert y[1, 1] == 9.0
    assert y[0, 0] == y[0, 2] == y[2, 0] == y[2, 2] == 4.0
    assert y[0, 1] == y[1, 0] == y[1, 2] == y[2, 1] == 6.0


def test_relu():
    out = nn.relu(np.array([-1.0, 0.0, 2.0]))
    assert out.tolist() == [0.0, 0.0, 2.0]


def test_same_padding_output_sizes():
    for h, w, s in [(8, 8, 1), (8, 8, 2), (7, 5, 2), (9, 10, 2), (1, 1, 2)]:
        x = np.zeros((1, h, w, 2))
        k = np.zeros((3, 3, 2, 4))
        y = nn.conv2d(x, k, np.zeros(4), stride=s)
        assert y.shape == (1, -(-h // s), -(-w // s), 4)


def test_conv_shape_mismatch():
    x = np.zeros((1, 4, 4, 3))
    with pytest.raises(ValueError):
        nn.conv2d(x, np.zeros((3, 3, 2, 4)), np.zeros(4))
    with pytest.raises(ValueError):
        nn.depthwise_conv2d(x, np.zeros((3, 3, 2)), np.zeros(2))


def test_conv_known_values_against_direct_sum():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 5, 6, 3))
    w = rng.normal(size=(3, 3, 3, 4))
    b = rng.normal(size=4)
    y = nn.conv2d(x, w, b, stride=1)
    # direct zero-padded cross-correlation at a few positions
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    for (n, i, j, c) in [(0, 0, 0, 0), (1, 2, 3, 1), (0, 4, 5, 3)]:
        patch = xp[n, i : i + 3, j : j + 3, :]
        assert y[n, i, j, c] == pytest.approx((patch * w[:, :, :, c]).sum() + b[c])


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_gradients_match_finite_differences(stride):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 5, 4, 3))
    w = rng.normal(size=(3, 3, 3, 4))
    b = rng.normal(size=4)
    proj = rng.normal(size=nn.conv2d(x, w, b, stride).shape)

    def f():
        return (nn.conv2d(x, w, b, stride) * proj).sum()

    y, cache = nn.conv2d_with_cache(x, w, b, stride)
    dx, dw, db = nn.conv2d_backward(proj, cache)
    assert rel_err(dx, central_diff(f, x)) < 1e-7
    assert rel_err(dw, central_diff(f, w)) < 1e-7
    assert rel_err(db, central_diff(f, b)) < 1e-7


def test_pointwise_conv_gradients():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 4, 3, 5))
    w = rng.normal(size=(1, 1, 5, 6))
    b = rng.normal(size=6)
    proj = rng.normal(size=(2, 4, 3, 6))

    def f():
        return (nn.conv2d(x, w, b, 1) * proj).sum()

    _, cache = nn.conv2d_with_cache(x, w, b, 1)
    dx, dw, db = nn.conv2d_backward(proj, cache)
    assert rel_err(dx, central_diff(f, x)) < 1e-7
    assert rel_err(dw, central_diff(f, w)) < 1e-7
    assert rel_err(db, central_diff(f, b)) < 1e-7


@pytest.mark.parametrize("stride", [1, 2])
def test_depthwise_gradients_match_finite_differences(stride):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 5, 5, 4))
    w = rng.normal(size=(3, 3, 4))
    b = rng.normal(size=4)
    proj = rng.normal(size=nn.depthwise_conv2d(x, w, b, stride).shape)

    def f():
        return (nn.depthwise_conv2d(x, w, b, stride) * proj).sum()

    _, cache = nn.depthwise_conv2d_with_cache(x, w, b, stride)
    dx, dw, db = nn.depthwise_conv2d_backward(proj, cache)
    assert rel_err(dx, central_diff(f, x)) < 1e-7
    assert rel_err(dw, central_diff(f, w)) < 1e-7
    assert rel_err(db, central_diff(f, b)) < 1e-7


def test_relu_gradient_zero_at_negative():
    x = np.array([-2.0, -0.5, 0.5, 3.0])
    dy = np.ones(4)
    assert nn.relu_backward(dy, x).tolist() == [0.0, 0.0, 1.0, 1.0]


def test_smooth_l1_values():
    assert nn.smooth_l1(0.0) == 0.0
    assert nn.smooth_l1(1.0) == 0.5
    assert nn.smooth_l1(-1.0) == 0.5
    assert nn.smooth_l1(3.0) == 2.5
    assert nn.smooth_l1(0.5) == pytest.approx(0.125)


def test_smooth_l1_continuity_at_one():
    quad = 0.5 * 1.0 * 1.0
    lin = 1.0 - 0.5
    assert abs(quad - lin) <= 1e-12
    eps = 1e-8
    assert nn.smooth_l1(1 + eps) - nn.smooth_l1(1 - eps) == pytest.approx(0, abs=1e-7)


def test_smooth_l1_grad():
    x = np.array([-3.0, -1.0, -0.25, 0.0, 0.25, 1.0, 3.0])
    assert nn.smooth_l1_grad(x).tolist() == [-1.0, -1.0, -0.25, 0.0, 0.25, 1.0, 1.0]
