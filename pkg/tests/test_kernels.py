import numpy as np
import pytest

from lsdip.kernels import (KERNEL_SIZE, _conv3d_grad_input_np,
                           _conv3d_grad_weights_np, _conv3d_np,
                           active_backend, conv3d, conv3d_grad_input,
                           conv3d_grad_weights)


def naive_conv3d(x, w, b):
    """Triple-loop reference: same zero-padding, stride 1."""
    ci, t, h, wd = x.shape
    co = w.shape[0]
    out = np.zeros((co, t, h, wd))
    for o in range(co):
        for tt in range(t):
            for hh in range(h):
                for ww in range(wd):
                    acc = b[o]
                    for i in range(ci):
                        for dt in range(3):
                            for dh in range(3):
                                for dw in range(3):
                                    st, sh, sw = tt + dt - 1, hh + dh - 1, ww + dw - 1
                                    if 0 <= st < t and 0 <= sh < h and 0 <= sw < wd:
                                        acc += w[o, i, dt, dh, dw] * x[i, st, sh, sw]
                    out[o, tt, hh, ww] = acc
    return out


def _rand_case(rng, ci=2, co=3, t=3, h=5, wd=4):
    x = rng.standard_normal((ci, t, h, wd))
    w = rng.standard_normal((co, ci, 3, 3, 3))
    b = rng.standard_normal(co)
    return x, w, b


def test_conv_matches_naive(rng):
    for _ in range(5):
        x, w, b = _rand_case(rng)
        assert np.allclose(conv3d(x, w, b), naive_conv3d(x, w, b), atol=1e-12)


def test_backends_agree(rng):
    x, w, b = _rand_case(rng, ci=3, co=4, t=4, h=6, wd=5)
    assert np.allclose(conv3d(x, w, b), _conv3d_np(x, w, b), atol=1e-12)
    g = rng.standard_normal((4, 4, 6, 5))
    assert np.allclose(conv3d_grad_input(g, w),
                       _conv3d_grad_input_np(g, w), atol=1e-12)
    gw_a, gb_a = conv3d_grad_weights(x, g)
    gw_b, gb_b = _conv3d_grad_weights_np(x, g)
    assert np.allclose(gw_a, gw_b, atol=1e-10)
    assert np.allclose(gb_a, gb_b, atol=1e-10)


def test_grad_input_is_adjoint_of_conv(rng):
    """<conv(x), g> == <x, grad_input(g)> when bias is zero."""
    x, w, _ = _rand_case(rng, ci=3, co=2, t=4, h=4, wd=6)
    b = np.zeros(2)
    g = rng.standard_normal((2, 4, 4, 6))
    lhs = np.sum(conv3d(x, w, b) * g)
    rhs = np.sum(x * conv3d_grad_input(g, w))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_grad_weights_matches_directional_derivative(rng):
    """<grad_w, dW> equals the derivative of <conv(x; w), g> along dW."""
    x, w, b = _rand_case(rng)
    g = rng.standard_normal((3, 3, 5, 4))
    gw, gb = conv3d_grad_weights(x, g)
    dw = rng.standard_normal(w.shape)
    db = rng.standard_normal(b.shape)
    eps = 1e-6
    f_plus = np.sum(conv3d(x, w + eps * dw, b + eps * db) * g)
    f_minus = np.sum(conv3d(x, w - eps * dw, b - eps * db) * g)
    numeric = (f_plus - f_minus) / (2 * eps)
    analytic = np.sum(gw * dw) + np.sum(gb * db)
    assert analytic == pytest.approx(numeric, rel=1e-7)


def test_bias_only(rng):
    x = np.zeros((2, 3, 4, 4))
    w = rng.standard_normal((3, 2, 3, 3, 3))
    b = np.array([1.0, -2.0, 0.5])
    out = conv3d(x, w, b)
    for o in range(3):
        assert np.all(out[o] == b[o])


def test_determinism(rng):
    x, w, b = _rand_case(rng, ci=4, co=4, t=4, h=8, wd=8)
    assert np.array_equal(conv3d(x, w, b), conv3d(x, w, b))


def test_active_backend_reports_known_value():
    assert active_backend() in ("numba", "numpy")


def test_kernel_size_constant():
    assert KERNEL_SIZE == 3
