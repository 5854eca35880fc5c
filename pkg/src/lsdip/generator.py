"""Untrained convolutional generators with exact manual backpropagation.

Each generator maps a fixed random latent (latent_channels, T, H, W) through
a stack of 3x3x3 same-padded convolutions with ReLU between layers and a
linear final layer.  Adjacent output channels are paired into complex
volumes: channels (0, 1) give the primary output, a 4-channel head carries a
second complex output for the shared-network ablation.

Gradients are computed by hand (reverse mode) so they can be validated
coordinate-by-coordinate against central finite differences.  Fitting uses
Adam and enforces an inexact-descent guarantee: if the loss after the inner
steps exceeds the entry loss plus the allowed slack, the update is reverted
bitwise and reported as rejected.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fileio
from .kernels import conv3d, conv3d_grad_input, conv3d_grad_weights
from .rng import rng_for
from .volume import CineVolume

__all__ = [
    "GeneratorArch", "GeneratorParams", "init_generator",
    "gen_forward", "gen_loss_grad", "fit_generator",
    "save_checkpoint", "load_checkpoint",
    "ADAM_BETA1", "ADAM_BETA2", "ADAM_EPS",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

K3 = 27  # 3x3x3 taps


@dataclass(frozen=True)
class GeneratorArch:
    """Channel widths per layer, latent first, complex-pair channels last."""

    channels: tuple[int, ...] = (2, 8, 8, 2)

    def __post_init__(self):
        if len(self.channels) < 2:
            raise ValueError("need at least one convolution layer")
        if self.channels[-1] not in (2, 4):
            raise ValueError("output channels must be 2 or 4 (complex pairs)")
        if any(c < 1 for c in self.channels):
            raise ValueError("channel widths must be positive")

    @property
    def n_layers(self) -> int:
        return len(self.channels) - 1

    def layer_shapes(self):
        for ci, co in zip(self.channels[:-1], self.channels[1:]):
            yield (co, ci, 3, 3, 3), (co,)

    @property
    def n_params(self) -> int:
        return sum(ci * co * K3 + co
                   for ci, co in zip(self.channels[:-1], self.channels[1:]))


@dataclass
class GeneratorParams:
    """Flat weight vector, immutable latent, and Adam state."""

    arch: GeneratorArch
    theta: np.ndarray             # flat float64, conv weights then bias per layer
    z: np.ndarray                 # (latent_channels, T, H, W), fixed after init
    adam_m: np.ndarray = field(default=None, repr=False)
    adam_v: np.ndarray = field(default=None, repr=False)
    adam_step: int = 0

    def __post_init__(self):
        if self.adam_m is None:
            self.adam_m = np.zeros_like(self.theta)
        if self.adam_v is None:
            self.adam_v = np.zeros_like(self.theta)
        self.z.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        _, t, h, w = self.z.shape
        return h, w, t

    def layers(self):
        """Yield (weights, bias) views into the flat parameter vector."""
        off = 0
        for wshape, bshape in self.arch.layer_shapes():
            wn = int(np.prod(wshape))
            w = self.theta[off:off + wn].reshape(wshape)
            off += wn
            b = self.theta[off:off + bshape[0]]
            off += bshape[0]
            yield w, b


def init_generator(arch: GeneratorArch, dims: tuple[int, int, int],
                   sigma_z: float, seed: int,
                   label: str = "gen") -> GeneratorParams:
    """Gaussian weight init (std sqrt(2/fan_in), zero bias) and N(0, sigma_z^2) latent."""
    if sigma_z <= 0:
        raise ValueError("sigma_z must be positive")
    h, w, t = dims
    rng_theta = rng_for(seed, f"theta_{label}")
    rng_z = rng_for(seed, f"z_{label}")
    chunks = []
    for wshape, bshape in arch.layer_shapes():
        fan_in = wshape[1] * K3
        std = np.sqrt(2.0 / fan_in)
        chunks.append(rng_theta.standard_normal(int(np.prod(wshape))) * std)
        chunks.append(np.zeros(bshape[0]))
    theta = np.concatenate(chunks)
    z = sigma_z * rng_z.standard_normal((arch.channels[0], t, h, w))
    return GeneratorParams(arch=arch, theta=theta, z=z)


def _forward_stack(p: GeneratorParams):
    """Run the conv stack; return output plus per-layer inputs and preactivations."""
    layers = list(p.layers())
    acts = [p.z]
    pres = []
    x = p.z
    for li, (w, b) in enumerate(layers):
        pre = conv3d(x, w, b)
        pres.append(pre)
        if li < len(layers) - 1:
            x = np.maximum(pre, 0.0)
            acts.append(x)
        else:
            x = pre
    return x, acts, pres


def _pair_to_complex(out: np.ndarray, offset: int) -> np.ndarray:
    """Channels (offset, offset+1) of a (C, T, H, W) array as (H, W, T) complex."""
    return (out[offset] + 1j * out[offset + 1]).transpose(1, 2, 0)


def _complex_to_pair(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gt = g.transpose(2, 0, 1)
    return np.ascontiguousarray(gt.real), np.ascontiguousarray(gt.imag)


def gen_forward(p: GeneratorParams) -> CineVolume:
    """Network output as a complex volume (first channel pair)."""
    out, _, _ = _forward_stack(p)
    return CineVolume(_pair_to_complex(out, 0))


def gen_forward_pair(p: GeneratorParams) -> tuple[CineVolume, CineVolume]:
    """Both complex outputs of a 4-channel (shared network) head."""
    if p.arch.channels[-1] != 4:
        raise ValueError("generator has no second output pair")
    out, _, _ = _forward_stack(p)
    return (CineVolume(_pair_to_complex(out, 0)),
            CineVolume(_pair_to_complex(out, 2)))


def _loss_grad_multi(p: GeneratorParams,
                     targets: list[tuple[int, np.ndarray, float]]):
    """Loss sum_j (w_j/2)*||pair_j - target_j||^2 and its exact theta-gradient.

    targets: (channel offset, complex (H, W, T) target, weight) triples.
    """
    out, acts, pres = _forward_stack(p)
    g_out = np.zeros_like(out)
    loss = 0.0
    for offset, target, weight in targets:
        diff = _pair_to_complex(out, offset) - target
        loss += 0.5 * weight * float(np.vdot(diff, diff).real)
        gre, gim = _complex_to_pair(diff)
        g_out[offset] += weight * gre
        g_out[offset + 1] += weight * gim
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite generator loss")

    layers = list(p.layers())
    grads = [None] * len(layers)
    g = g_out
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        gw, gb = conv3d_grad_weights(acts[li], g)
        grads[li] = (gw, gb)
        if li > 0:
            g = conv3d_grad_input(g, w)
            g *= pres[li - 1] > 0.0
    flat = np.concatenate([np.concatenate([gw.ravel(), gb])
                           for gw, gb in grads])
    if not np.all(np.isfinite(flat)):
        raise FloatingPointError("non-finite generator gradient")
    return loss, flat


def gen_loss_grad(p: GeneratorParams, target: CineVolume,
                  rho: float) -> tuple[float, np.ndarray]:
    """(rho/2)*||output - target||_F^2 and its gradient w.r.t. the weights."""
    return _loss_grad_multi(p, [(0, target.data, rho)])


def _adam_step(p: GeneratorParams, grad: np.ndarray, lr: float) -> None:
    p.adam_step += 1
    p.adam_m = ADAM_BETA1 * p.adam_m + (1.0 - ADAM_BETA1) * grad
    p.adam_v = ADAM_BETA2 * p.adam_v + (1.0 - ADAM_BETA2) * grad * grad
    mhat = p.adam_m / (1.0 - ADAM_BETA1 ** p.adam_step)
    vhat = p.adam_v / (1.0 - ADAM_BETA2 ** p.adam_step)
    p.theta = p.theta - lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


def fit_generator(p: GeneratorParams, target, n_steps: int, lr: float,
                  eps_k: float,
                  rho: float = 1.0) -> tuple[GeneratorParams, float, bool]:
    """Adam steps on the penalty loss, with a descent guarantee by revert.

    `target` is either a CineVolume (2-channel head) or a list of
    (channel offset, complex array, weight) triples.  If the final loss
    exceeds the entry loss plus eps_k, or anything goes non-finite, the
    parameters and optimizer state revert bitwise to their input values and
    accepted=False is returned.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if lr <= 0:
        raise ValueError("lr must be positive")
    if eps_k < 0:
        raise ValueError("eps_k must be nonnegative")
    targets = (target if isinstance(target, list)
               else [(0, target.data, rho)])
    snapshot = (p.theta.copy(), p.adam_m.copy(), p.adam_v.copy(), p.adam_step)

    def revert():
        p.theta, p.adam_m, p.adam_v, p.adam_step = snapshot

    try:
        loss0, grad = _loss_grad_multi(p, targets)
        for _ in range(n_steps):
            _adam_step(p, grad, lr)
            loss, grad = _loss_grad_multi(p, targets)
    except FloatingPointError:
        revert()
        return p, float("nan"), False
    if not np.isfinite(loss) or loss > loss0 + eps_k:
        revert()
        return p, loss0, False
    return p, loss, True


def save_checkpoint(path: str, p: GeneratorParams) -> None:
    flat = np.concatenate([p.theta, p.z.ravel(), p.adam_m, p.adam_v,
                           [float(p.adam_step)]])
    fileio.write_params(path, flat)


def load_checkpoint(path: str, arch: GeneratorArch,
                    dims: tuple[int, int, int]) -> GeneratorParams:
    h, w, t = dims
    flat = fileio.read_params(path)
    n = arch.n_params
    zn = arch.channels[0] * t * h * w
    if flat.size != 3 * n + zn + 1:
        raise fileio.FormatError("checkpoint size does not match architecture")
    theta = flat[:n].copy()
    z = flat[n:n + zn].reshape(arch.channels[0], t, h, w).copy()
    m = flat[n + zn:2 * n + zn].copy()
    v = flat[2 * n + zn:3 * n + zn].copy()
    step = int(flat[-1])
    return GeneratorParams(arch=arch, theta=theta, z=z,
                           adam_m=m, adam_v=v, adam_step=step)
