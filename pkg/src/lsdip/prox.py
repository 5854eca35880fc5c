"""Proximal operators: nuclear-norm shrinkage and complex soft-thresholding.

`svt` is the exact minimizer of tau*||Z||_* + 0.5*||Z - M||_F^2, obtained by
shrinking the singular values of M.  `soft` is the exact minimizer of the
elementwise l1 counterpart and preserves phase.  The transformed l1 prox is
exact because the supported transforms are unitary.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["svt", "soft", "SparsifyingTransform", "prox_l1_in_transform"]


def svt(m: np.ndarray, tau: float) -> np.ndarray:
    """Singular value thresholding: shrink each singular value by tau."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    if not np.all(np.isfinite(np.asarray(m).view(np.float64))):
        raise ValueError("non-finite input to svt")
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (u * s) @ vh


def soft(x: np.ndarray, tau: float) -> np.ndarray:
    """Complex soft-thresholding, x * max(1 - tau/|x|, 0); soft(0) = 0."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    mag = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > tau, 1.0 - tau / np.where(mag > 0, mag, 1.0), 0.0)
    return x * scale


@dataclass(frozen=True)
class SparsifyingTransform:
    """Unitary transform applied along the temporal (column) axis.

    kind="identity" leaves the matrix untouched; kind="temporal_fourier"
    applies an orthonormal length-T DFT to each pixel's time course.
    """

    kind: str = "identity"

    _KINDS = ("identity", "temporal_fourier")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}; "
                             f"expected one of {self._KINDS}")

    def apply(self, m: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return m
        return np.fft.fft(m, axis=-1, norm="ortho")

    def adjoint(self, m: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return m
        return np.fft.ifft(m, axis=-1, norm="ortho")


def prox_l1_in_transform(x: np.ndarray, tau: float,
                         w: SparsifyingTransform) -> np.ndarray:
    """Exact prox of tau*||W . ||_1: Wᴴ soft(W x, tau) for unitary W."""
    return w.adjoint(soft(w.apply(x), tau))
