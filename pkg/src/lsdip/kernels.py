"""3x3x3 convolution kernels for the untrained generators.

Arrays use (channels, T, H, W) layout with float64 throughout; convolutions
are stride 1 with same zero-padding.  Two interchangeable backends:

* numba: JIT-compiled row-accumulating loops (default, much faster), and
* numpy: padded shift-and-accumulate via BLAS tensordot.

Set LSDIP_NO_NUMBA=1 before import to force the numpy path.  Both backends
are deterministic: every output element is accumulated in a fixed order.
"""

import os

import numpy as np

__all__ = ["conv3d", "conv3d_grad_input", "conv3d_grad_weights",
           "active_backend", "KERNEL_SIZE"]

KERNEL_SIZE = 3
_PAD = KERNEL_SIZE // 2


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (_PAD, _PAD), (_PAD, _PAD), (_PAD, _PAD)))


# ---------------------------------------------------------------- numpy path

def _conv3d_np(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    ci, t, h, wd = x.shape
    co = w.shape[0]
    xp = _pad(x)
    out = np.empty((co, t, h, wd))
    out[:] = b[:, None, None, None]
    for dt in range(KERNEL_SIZE):
        for dh in range(KERNEL_SIZE):
            for dw in range(KERNEL_SIZE):
                out += np.tensordot(w[:, :, dt, dh, dw],
                                    xp[:, dt:dt + t, dh:dh + h, dw:dw + wd],
                                    axes=(1, 0))
    return out


def _conv3d_grad_input_np(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    # correlation with the transposed, spatially flipped kernel
    wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3, 4)[:, :, ::-1, ::-1, ::-1])
    zero = np.zeros(wt.shape[0])
    return _conv3d_np(g, wt, zero)


def _conv3d_grad_weights_np(x: np.ndarray, g: np.ndarray):
    ci, t, h, wd = x.shape
    co = g.shape[0]
    xp = _pad(x)
    gw = np.empty((co, ci, KERNEL_SIZE, KERNEL_SIZE, KERNEL_SIZE))
    g2 = g.reshape(co, -1)
    for dt in range(KERNEL_SIZE):
        for dh in range(KERNEL_SIZE):
            for dw in range(KERNEL_SIZE):
                patch = xp[:, dt:dt + t, dh:dh + h, dw:dw + wd].reshape(ci, -1)
                gw[:, :, dt, dh, dw] = g2 @ patch.T
    gb = g2.sum(axis=1)
    return gw, gb


# ---------------------------------------------------------------- numba path

def _build_numba():
    from numba import njit

    @njit(fastmath=True, cache=True)
    def conv3d_nb(xp, w, b, out):
        co, ci = w.shape[0], w.shape[1]
        t, h, wd = out.shape[1], out.shape[2], out.shape[3]
        row = np.empty(wd)
        for o in range(co):
            for tt in range(t):
                for hh in range(h):
                    for k in range(wd):
                        row[k] = b[o]
                    for i in range(ci):
                        for dt in range(3):
                            for dh in range(3):
                                base = xp[i, tt + dt, hh + dh]
                                w0 = w[o, i, dt, dh, 0]
                                w1 = w[o, i, dt, dh, 1]
                                w2 = w[o, i, dt, dh, 2]
                                for k in range(wd):
                                    row[k] += (w0 * base[k] + w1 * base[k + 1]
                                               + w2 * base[k + 2])
                    for k in range(wd):
                        out[o, tt, hh, k] = row[k]

    @njit(fastmath=True, cache=True)
    def grad_w_nb(xp, g, gw, gb):
        co, ci = gw.shape[0], gw.shape[1]
        t, h, wd = g.shape[1], g.shape[2], g.shape[3]
        for o in range(co):
            acc_b = 0.0
            for tt in range(t):
                for hh in range(h):
                    for k in range(wd):
                        acc_b += g[o, tt, hh, k]
            gb[o] = acc_b
            for i in range(ci):
                for dt in range(3):
                    for dh in range(3):
                        s0 = 0.0
                        s1 = 0.0
                        s2 = 0.0
                        for tt in range(t):
                            for hh in range(h):
                                grow = g[o, tt, hh]
                                base = xp[i, tt + dt, hh + dh]
                                for k in range(wd):
                                    gk = grow[k]
                                    s0 += gk * base[k]
                                    s1 += gk * base[k + 1]
                                    s2 += gk * base[k + 2]
                        gw[o, i, dt, dh, 0] = s0
                        gw[o, i, dt, dh, 1] = s1
                        gw[o, i, dt, dh, 2] = s2

    def conv3d_fn(x, w, b):
        out = np.empty((w.shape[0],) + x.shape[1:])
        conv3d_nb(_pad(x), np.ascontiguousarray(w), b, out)
        return out

    def grad_input_fn(g, w):
        wt = np.ascontiguousarray(
            w.transpose(1, 0, 2, 3, 4)[:, :, ::-1, ::-1, ::-1])
        out = np.empty((wt.shape[0],) + g.shape[1:])
        conv3d_nb(_pad(g), wt, np.zeros(wt.shape[0]), out)
        return out

    def grad_weights_fn(x, g):
        co, ci = g.shape[0], x.shape[0]
        gw = np.empty((co, ci, KERNEL_SIZE, KERNEL_SIZE, KERNEL_SIZE))
        gb = np.empty(co)
        grad_w_nb(_pad(x), np.ascontiguousarray(g), gw, gb)
        return gw, gb

    return conv3d_fn, grad_input_fn, grad_weights_fn


_BACKEND = "numpy"
conv3d = _conv3d_np
conv3d_grad_input = _conv3d_grad_input_np
conv3d_grad_weights = _conv3d_grad_weights_np

if os.environ.get("LSDIP_NO_NUMBA", "") not in ("1", "true", "yes"):
    try:
        conv3d, conv3d_grad_input, conv3d_grad_weights = _build_numba()
        _BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


def active_backend() -> str:
    """Either "numba" or "numpy"."""
    return _BACKEND
