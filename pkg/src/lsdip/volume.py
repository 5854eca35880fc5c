"""Complex image-series container and the HW x T matrix reshape.

A cine series is stored as a complex (H, W, T) array.  Its matrix form has
one column per temporal frame, with pixels vectorized column-major over
(h, w) -- vec index = h + H*w.  That order is fixed so that serialized files
stay portable; the round trip is bitwise exact.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["CineVolume", "to_casorati", "from_casorati", "frame_mean"]


class DimensionError(ValueError):
    """Shape or dimension constraint violated."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CineVolume:
    """Complex (H, W, T) image series.

    H and W must be powers of two (FFT-friendly sizes are part of the
    forward-operator contract); T >= 1.  Entries must be finite.
    """

    data: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.complex128)
        if d.ndim != 3:
            raise DimensionError(f"expected (H, W, T) array, got shape {d.shape}")
        h, w, t = d.shape
        if not (_is_pow2(h) and _is_pow2(w)):
            raise DimensionError(f"H, W must be powers of two, got {h}x{w}")
        if t < 1:
            raise DimensionError("T must be >= 1")
        if not np.all(np.isfinite(d.view(np.float64))):
            raise DimensionError("volume contains non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def dims(self) -> tuple[int, int, int]:
        h, w, t = self.data.shape
        return h, w, t

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


def to_casorati(v: CineVolume) -> np.ndarray:
    """Stack vectorized frames as columns: (H*W, T), vec column-major in (h, w)."""
    h, w, t = v.dims
    return v.data.reshape(h * w, t, order="F").copy()


def from_casorati(m: np.ndarray, dims: tuple[int, int, int]) -> CineVolume:
    """Exact inverse of to_casorati for the given (H, W, T)."""
    h, w, t = dims
    m = np.asarray(m)
    if m.shape != (h * w, t):
        raise DimensionError(
            f"matrix shape {m.shape} inconsistent with dims {dims} "
            f"(expected {(h * w, t)})"
        )
    return CineVolume(m.reshape(h, w, t, order="F"))


def frame_mean(v: CineVolume) -> np.ndarray:
    """Pixelwise arithmetic mean over the temporal axis; (H, W) complex."""
    return v.data.mean(axis=2)
