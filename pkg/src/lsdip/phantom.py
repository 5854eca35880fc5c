"""Synthetic dynamic phantom and smooth coil-map generation.

The phantom is a sum of static background ellipses (a rank-1 contribution to
the frame-stacked matrix) plus small ellipses whose centers oscillate over
time, giving localized temporal innovations.  Intensities are clipped to
[0, 1].  Coil maps are complex Gaussian bumps placed around the field of
view, normalized so the sum of squared magnitudes is 1 at every pixel.
"""

from dataclasses import dataclass

import numpy as np

from .forward_model import CoilSensitivities
from .rng import rng_for
from .volume import CineVolume

__all__ = ["PhantomSpec", "make_phantom", "make_coils"]


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 64, 8)
    background_ellipses: int = 4
    moving_ellipses: int = 3
    motion_amplitude: float = 4.0
    seed: int = 7

    def __post_init__(self):
        h, w, _ = self.dims
        if self.motion_amplitude >= min(h, w) / 4:
            raise ValueError(
                f"motion_amplitude {self.motion_amplitude} too large for "
                f"{h}x{w} field of view (must be < {min(h, w) / 4})"
            )
        if self.background_ellipses < 0 or self.moving_ellipses < 0:
            raise ValueError("ellipse counts must be nonnegative")


def _ellipse(hh: np.ndarray, ww: np.ndarray, ch: float, cw: float,
             rh: float, rw: float, angle: float) -> np.ndarray:
    """Soft-edged ellipse indicator on the pixel grid."""
    dh = hh - ch
    dw = ww - cw
    ca, sa = np.cos(angle), np.sin(angle)
    u = (ca * dh + sa * dw) / rh
    v = (-sa * dh + ca * dw) / rw
    r2 = u * u + v * v
    # sharp edge with a one-ish pixel rolloff; broadband enough that
    # undersampling produces visible aliasing
    return np.clip(4.0 * (1.0 - r2), 0.0, 1.0)


def make_phantom(spec: PhantomSpec) -> CineVolume:
    """Ground-truth cine series, deterministic per seed, magnitudes in [0, 1]."""
    h, w, t = spec.dims
    rng = rng_for(spec.seed, "phantom")
    hh, ww = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float),
                         indexing="ij")
    frames = np.zeros((h, w, t))

    background = np.zeros((h, w))
    # enclosing body ellipse plus interior static structures
    background += 0.5 * _ellipse(hh, ww, h / 2, w / 2, h * 0.42, w * 0.42, 0.0)
    for _ in range(spec.background_ellipses):
        ch = rng.uniform(0.3 * h, 0.7 * h)
        cw = rng.uniform(0.3 * w, 0.7 * w)
        rh = rng.uniform(0.06 * h, 0.16 * h)
        rw = rng.uniform(0.06 * w, 0.16 * w)
        background += rng.uniform(0.1, 0.3) * _ellipse(hh, ww, ch, cw, rh, rw,
                                                       rng.uniform(0, np.pi))
    frames += background[:, :, None]

    for _ in range(spec.moving_ellipses):
        ch = rng.uniform(0.35 * h, 0.65 * h)
        cw = rng.uniform(0.35 * w, 0.65 * w)
        rh = rng.uniform(0.04 * h, 0.09 * h)
        rw = rng.uniform(0.04 * w, 0.09 * w)
        amp = rng.uniform(0.15, 0.35)
        phase = rng.uniform(0, 2 * np.pi)
        direction = rng.uniform(0, 2 * np.pi)
        angle = rng.uniform(0, np.pi)
        for k in range(t):
            # one full oscillation across the series
            s = spec.motion_amplitude * np.sin(2 * np.pi * k / max(t, 1) + phase)
            frames[:, :, k] += amp * _ellipse(
                hh, ww,
                ch + s * np.cos(direction),
                cw + s * np.sin(direction),
                rh, rw, angle,
            )

    frames = np.clip(frames, 0.0, 1.0)
    if spec.moving_ellipses > 0 and t > 1:
        diffs = np.abs(np.diff(frames, axis=2)).sum()
        if diffs == 0.0:
            raise ValueError("degenerate phantom geometry: nothing moves")
    return CineVolume(frames.astype(np.complex128))


def make_coils(h: int, w: int, n_coils: int, seed: int) -> CoilSensitivities:
    """Smooth complex coil profiles, SOS-normalized pixelwise."""
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")
    rng = rng_for(seed, "coils")
    hh, ww = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float),
                         indexing="ij")
    maps = np.empty((n_coils, h, w), dtype=np.complex128)
    for c in range(n_coils):
        ang = 2 * np.pi * c / n_coils + rng.uniform(-0.2, 0.2)
        ch = h / 2 + 0.55 * h * np.cos(ang)
        cw = w / 2 + 0.55 * w * np.sin(ang)
        sigma = 0.6 * max(h, w) * rng.uniform(0.9, 1.1)
        mag = np.exp(-((hh - ch) ** 2 + (ww - cw) ** 2) / (2 * sigma**2))
        # gentle spatially linear phase per coil
        ph = (rng.uniform(-1, 1) * (hh - h / 2) / h
              + rng.uniform(-1, 1) * (ww - w / 2) / w) * np.pi
        maps[c] = mag * np.exp(1j * ph)
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    maps /= sos[None, :, :]
    return CoilSensitivities(maps)
