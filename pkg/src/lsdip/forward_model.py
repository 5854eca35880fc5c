"""Multi-coil undersampled Fourier operator and Cartesian sampling masks.

The acquisition operator is mask o FFT o coil-weighting, applied per frame
and per coil.  The FFT is centered and orthonormal, so with a full mask and
sum-of-squares-normalized coil maps the operator is an isometry and
adjoint(forward(x)) == x.

Phase-encode lines (columns of k-space) are drawn once and shared by all
temporal frames; a contiguous central block is always fully sampled and the
remaining lines follow a polynomial variable-density profile.
"""

from dataclasses import dataclass, field

import numpy as np

from .rng import rng_for
from .volume import CineVolume, DimensionError, _is_pow2

__all__ = [
    "SamplingMask",
    "CoilSensitivities",
    "KSpaceData",
    "make_mask",
    "forward",
    "adjoint",
    "estimate_op_norm_sq",
]

# exponent of the (1 + |i - W/2| / (W/2))^(-p) line-selection density
DENSITY_DECAY = 3.0


@dataclass(frozen=True)
class SamplingMask:
    """Set of sampled phase-encode columns, identical for every frame."""

    width: int
    selected: np.ndarray          # sorted unique column indices, int64
    center_lines: int
    af: float                     # nominal acceleration factor

    def __post_init__(self):
        sel = np.unique(np.asarray(self.selected, dtype=np.int64))
        if sel.size and (sel[0] < 0 or sel[-1] >= self.width):
            raise DimensionError("mask line index out of range")
        object.__setattr__(self, "selected", sel)

    @property
    def column_flags(self) -> np.ndarray:
        """Boolean length-W vector, True where the column is sampled."""
        flags = np.zeros(self.width, dtype=bool)
        flags[self.selected] = True
        return flags

    @property
    def achieved_af(self) -> float:
        return self.width / max(len(self.selected), 1)


@dataclass(frozen=True)
class CoilSensitivities:
    """Complex (C, H, W) coil maps with sum-of-squares magnitude 1 pixelwise."""

    maps: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.complex128)
        if m.ndim != 3:
            raise DimensionError(f"expected (C, H, W) maps, got shape {m.shape}")
        sos = np.sum(np.abs(m) ** 2, axis=0)
        if not np.allclose(sos, 1.0, atol=1e-10):
            raise DimensionError("coil maps are not sum-of-squares normalized")
        object.__setattr__(self, "maps", m)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]


@dataclass(frozen=True)
class KSpaceData:
    """Complex (C, H, W, T) measurements; unsampled columns are exactly zero."""

    samples: np.ndarray
    mask: SamplingMask

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim != 4:
            raise DimensionError(f"expected (C, H, W, T) samples, got {s.shape}")
        if s.shape[2] != self.mask.width:
            raise DimensionError("k-space width does not match mask width")
        unsampled = ~self.mask.column_flags
        if np.any(s[:, :, unsampled, :] != 0):
            raise DimensionError("nonzero entries at unsampled phase-encode lines")
        object.__setattr__(self, "samples", s)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.samples.shape

    def norm(self) -> float:
        return float(np.linalg.norm(self.samples))


def make_mask(width: int, af: float, center_lines: int, seed: int) -> SamplingMask:
    """Variable-density Cartesian line mask, deterministic per seed.

    The central `center_lines` columns are always kept; the remaining budget
    W/af - center_lines is drawn without replacement with probability
    decaying polynomially away from the spectrum center.
    """
    if not _is_pow2(width):
        raise DimensionError(f"width must be a power of two, got {width}")
    if not (1 <= af <= width):
        raise ValueError(f"acceleration factor must be in [1, {width}], got {af}")
    n_target = int(round(width / af))
    if center_lines < 0 or center_lines > n_target:
        raise ValueError(
            f"center_lines={center_lines} exceeds the line budget {n_target}"
        )
    c0 = width // 2 - center_lines // 2
    center = np.arange(c0, c0 + center_lines)
    n_random = n_target - center_lines
    candidates = np.setdiff1d(np.arange(width), center)
    if n_random > candidates.size:
        raise ValueError("requested more lines than available columns")
    if n_random > 0:
        dist = np.abs(candidates - width / 2) / (width / 2)
        weights = (1.0 + dist) ** (-DENSITY_DECAY)
        rng = rng_for(seed, "mask")
        chosen = rng.choice(candidates, size=n_random, replace=False,
                            p=weights / weights.sum())
    else:
        chosen = np.empty(0, dtype=np.int64)
    selected = np.union1d(center, chosen)
    return SamplingMask(width=width, selected=selected,
                        center_lines=center_lines, af=float(af))


def _fft2c(x: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2D FFT over the first two axes of (..., H, W, ...)."""
    x = np.fft.ifftshift(x, axes=(-3, -2))
    x = np.fft.fft2(x, axes=(-3, -2), norm="ortho")
    return np.fft.fftshift(x, axes=(-3, -2))


def _ifft2c(x: np.ndarray) -> np.ndarray:
    x = np.fft.ifftshift(x, axes=(-3, -2))
    x = np.fft.ifft2(x, axes=(-3, -2), norm="ortho")
    return np.fft.fftshift(x, axes=(-3, -2))


def forward(x: CineVolume, coils: CoilSensitivities, mask: SamplingMask) -> KSpaceData:
    """Coil-weight, Fourier-transform and undersample each frame."""
    h, w, t = x.dims
    if coils.maps.shape[1:] != (h, w) or mask.width != w:
        raise DimensionError("volume, coil and mask dimensions are inconsistent")
    weighted = coils.maps[:, :, :, None] * x.data[None, :, :, :]   # (C, H, W, T)
    y = _fft2c(weighted)
    y[:, :, ~mask.column_flags, :] = 0.0
    return KSpaceData(samples=y, mask=mask)


def adjoint(y: KSpaceData, coils: CoilSensitivities) -> CineVolume:
    """Inverse FFT per coil, conjugate coil weighting, sum over coils."""
    c, h, w, t = y.dims
    if coils.maps.shape != (c, h, w):
        raise DimensionError("k-space and coil dimensions are inconsistent")
    imgs = _ifft2c(y.samples)
    combined = np.sum(np.conj(coils.maps)[:, :, :, None] * imgs, axis=0)
    return CineVolume(combined)


def estimate_op_norm_sq(coils: CoilSensitivities, mask: SamplingMask,
                        dims: tuple[int, int, int], iters: int = 30,
                        seed: int = 0) -> float:
    """Power-iteration estimate of the largest eigenvalue of AᴴA.

    For this normalized operator the true value is at most 1; the estimate
    is nondecreasing in `iters` and converges from below.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = rng_for(seed, "opnorm")
    h, w, t = dims
    x = rng.standard_normal((h, w, t)) + 1j * rng.standard_normal((h, w, t))
    lam = 0.0
    for _ in range(iters):
        x = x / np.linalg.norm(x)
        v = CineVolume(x)
        ax = adjoint(forward(v, coils, mask), coils).data
        lam = float(np.real(np.vdot(x, ax)))
        x = ax
    return lam
