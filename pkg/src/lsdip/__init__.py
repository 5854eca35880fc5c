"""Dynamic MRI reconstruction with dual untrained generators.

Reconstructs cine image series from undersampled multi-coil Fourier
measurements by splitting the frame-stacked matrix into a low-rank
background and a sparse dynamic component, each parameterized by a small
untrained convolutional network, and solving the resulting constrained
problem with extrapolated ADMM.  Includes a synthetic phantom pipeline, a
classical low-rank plus sparse baseline, and convergence instrumentation.
"""

from .eadmm import RunReport, SolverConfig, classical_ls, run
from .forward_model import (CoilSensitivities, KSpaceData, SamplingMask,
                            adjoint, forward, make_mask)
from .generator import GeneratorArch, GeneratorParams
from .metrics import psnr, ssim
from .phantom import PhantomSpec, make_coils, make_phantom
from .volume import CineVolume, from_casorati, frame_mean, to_casorati

__all__ = [
    "CineVolume", "to_casorati", "from_casorati", "frame_mean",
    "SamplingMask", "CoilSensitivities", "KSpaceData",
    "make_mask", "forward", "adjoint",
    "PhantomSpec", "make_phantom", "make_coils",
    "GeneratorArch", "GeneratorParams",
    "SolverConfig", "RunReport", "run", "classical_ls",
    "psnr", "ssim",
]

__version__ = "0.1.0"
