"""Convergence monitoring and image quality metrics.

Evaluates the merit function the solver descends (data term, both
regularizers, penalty and dual terms), the Lyapunov value that augments it
with weighted squared iterate differences, the empirical per-step descent
check with its summable slack, the admissible extrapolation bounds, and
PSNR/SSIM on magnitude images.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .prox import SparsifyingTransform
from .volume import CineVolume

__all__ = [
    "TheoryParams", "MonitorRow", "DescentReport",
    "lagrangian_value", "lyapunov", "check_descent", "extrapolation_bounds",
    "psnr", "ssim",
]

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


# --------------------------------------------------------------- theory side

@dataclass(frozen=True)
class TheoryParams:
    """Constants entering the sufficient-descent analysis.

    tau_v/tau_u are the strong-convexity moduli of the two auxiliary
    subproblems (the quadratic penalty supplies them, so they equal the
    penalty weights).  delta_v/delta_u weight the squared iterate
    differences inside the Lyapunov function; when left unset they default
    to the midpoints of their admissible intervals.
    """

    l_f: float
    alpha: float
    beta: float
    tau_v: float
    tau_u: float
    eta1: float = 1.0
    eta2: float = 1.0
    delta_v: float | None = None
    delta_u: float | None = None

    def __post_init__(self):
        if self.l_f <= 0 or self.eta1 <= 0 or self.eta2 <= 0:
            raise ValueError("l_f, eta1, eta2 must be positive")
        if self.delta_v is None:
            object.__setattr__(self, "delta_v",
                               max(0.0, (self.tau_v - 2 * self.c1) / 2))
        if self.delta_u is None:
            lo, hi = 2 * self.c3, self.tau_u - 2 * self.c2
            object.__setattr__(self, "delta_u", max(0.0, (lo + hi) / 2))

    # extrapolation-error constants, always derived from current fields
    @property
    def c1(self) -> float:
        return (2 * self.alpha**2 * self.l_f
                + 0.5 * self.alpha * self.l_f * self.eta1
                + 0.5 * self.beta * self.l_f * self.eta2)

    @property
    def c2(self) -> float:
        return 0.5 * self.alpha * self.l_f / self.eta1

    @property
    def c3(self) -> float:
        return 2 * self.beta**2 * self.l_f + 0.5 * self.beta * self.l_f / self.eta2

    @property
    def admissible_v(self) -> bool:
        return self.delta_v < self.tau_v - 2 * self.c1

    @property
    def admissible_u(self) -> bool:
        return 2 * self.c3 < self.delta_u < self.tau_u - 2 * self.c2

    @property
    def admissible(self) -> bool:
        return self.admissible_v and self.admissible_u


@dataclass(frozen=True)
class MonitorRow:
    """One solver trace row; lyapunov always recomposes from its parts."""

    k: int
    lagrangian: float
    lyapunov: float
    dv: float                    # ||V^k - V^{k-1}||_F
    du: float
    res_lowrank: float           # ||V - L(theta)||_F
    res_sparse: float
    loss_lowrank: float
    loss_sparse: float
    eps_k: float
    psnr: float
    ssim: float

    CSV_HEADER = ["k", "lagrangian", "lyapunov", "dV", "dU", "res_L", "res_S",
                  "loss_L", "loss_S", "eps_k", "psnr", "ssim"]

    def csv_row(self) -> list:
        return [self.k, self.lagrangian, self.lyapunov, self.dv, self.du,
                self.res_lowrank, self.res_sparse, self.loss_lowrank,
                self.loss_sparse, self.eps_k, self.psnr, self.ssim]


def lagrangian_value(y_casorati: np.ndarray, apply_forward, v: np.ndarray,
                     u: np.ndarray, lvol: np.ndarray, svol: np.ndarray,
                     d_l: np.ndarray, d_s: np.ndarray,
                     lambda_l: float, lambda_s: float,
                     rho_l: float, rho_s: float,
                     transform: SparsifyingTransform) -> float:
    """Merit function: data term + both regularizers + penalty/dual terms.

    `apply_forward` maps an HW x T matrix to measurement space; all other
    arguments are HW x T matrices.
    """
    resid = y_casorati - apply_forward(v + u)
    val = 0.5 * float(np.vdot(resid, resid).real)
    val += lambda_l * float(np.linalg.svd(v, compute_uv=False).sum())
    val += lambda_s * float(np.abs(transform.apply(u)).sum())
    pl = v - lvol + d_l
    ps = u - svol + d_s
    val += 0.5 * rho_l * (float(np.vdot(pl, pl).real)
                          - float(np.vdot(d_l, d_l).real))
    val += 0.5 * rho_s * (float(np.vdot(ps, ps).real)
                          - float(np.vdot(d_s, d_s).real))
    return val


def lyapunov(lagrangian: float, dv: float, du: float,
             delta_v: float, delta_u: float) -> float:
    """Merit value plus weighted squared successive iterate differences."""
    return lagrangian + 0.5 * delta_v * dv**2 + 0.5 * delta_u * du**2


@dataclass(frozen=True)
class DescentReport:
    violations: int              # steps where the slack-adjusted value rose
    total_violation: float       # sum of positive excesses beyond the slack
    total_slack: float           # sum of gamma_k over all steps
    xi_empirical: float          # largest xi with Psi-decrease >= xi*(dV^2+dU^2)-gamma
    per_step_violation: np.ndarray


def check_descent(trace: list[MonitorRow],
                  gamma: np.ndarray | None = None) -> DescentReport:
    """Empirical sufficient-descent audit of a monitor trace.

    For each step the violation is max(0, Psi_{k+1} - Psi_k - gamma_k) where
    gamma_k is the inexact-fit slack recorded with the row (twice the
    per-network allowance).  xi_empirical is the largest single constant xi
    such that every step satisfies
    Psi_{k+1} - Psi_k <= -xi*(dV^2 + dU^2) + gamma_k.
    """
    if len(trace) < 2:
        raise ValueError("need at least two trace rows")
    psi = np.array([r.lyapunov for r in trace])
    if gamma is None:
        gamma = np.array([2.0 * r.eps_k for r in trace[1:]])
    dpsi = np.diff(psi)
    viol = np.maximum(0.0, dpsi - gamma)
    move = np.array([r.dv**2 + r.du**2 for r in trace[1:]])
    ok = move > 0
    xi = float(np.min((gamma[ok] - dpsi[ok]) / move[ok])) if ok.any() else np.inf
    return DescentReport(
        violations=int(np.count_nonzero(viol > 0)),
        total_violation=float(viol.sum()),
        total_slack=float(gamma.sum()),
        xi_empirical=max(xi, 0.0),
        per_step_violation=viol,
    )


def extrapolation_bounds(l_f: float, eta1: float, eta2: float,
                         delta_u: float, tau_u: float) -> tuple[float, float]:
    """Largest extrapolation weights with a sufficient-descent guarantee.

    alpha_max = eta1*(tau_u - delta_u)/l_f; beta_max is the positive root of
    2*l_f*b^2 + (l_f/(2*eta2))*b - delta_u/2 = 0, computed with the stable
    quadratic formula.
    """
    if l_f <= 0 or eta1 <= 0 or eta2 <= 0:
        raise ValueError("l_f, eta1, eta2 must be positive")
    if not (0 < delta_u < tau_u):
        raise ValueError("need 0 < delta_u < tau_u")
    alpha_max = eta1 * (tau_u - delta_u) / l_f
    a = 2.0 * l_f
    b = 0.5 * l_f / eta2
    c = -0.5 * delta_u
    disc = b * b - 4.0 * a * c
    assert disc > 0.0, "discriminant must be positive for delta_u > 0"
    beta_max = 2.0 * (-c) / (b + np.sqrt(disc))
    return float(alpha_max), float(beta_max)


# -------------------------------------------------------------- image metrics

def _check_pair(x_hat: CineVolume, x_ref: CineVolume):
    if x_hat.dims != x_ref.dims:
        raise ValueError("volume dimensions differ")
    peak = float(np.abs(x_ref.data).max())
    if peak == 0.0:
        raise ValueError("reference volume is identically zero")
    return peak


def psnr(x_hat: CineVolume, x_ref: CineVolume) -> float:
    """Peak signal-to-noise ratio in dB over magnitude images.

    Peak is max|x_ref|; identical inputs give +inf.
    """
    peak = _check_pair(x_hat, x_ref)
    err = np.abs(x_hat.data) - np.abs(x_ref.data)
    rmse = float(np.sqrt(np.mean(err**2)))
    if rmse == 0.0:
        return float("inf")
    return 20.0 * float(np.log10(peak / rmse))


def ssim(x_hat: CineVolume, x_ref: CineVolume) -> float:
    """Mean local SSIM with a 7x7 uniform window per frame, on magnitudes.

    Dynamic range is max|x_ref|; frame scores are averaged.
    """
    peak = _check_pair(x_hat, x_ref)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    a = np.abs(x_hat.data)
    b = np.abs(x_ref.data)
    scores = []
    for t in range(a.shape[2]):
        fa, fb = a[:, :, t], b[:, :, t]
        mu_a = uniform_filter(fa, SSIM_WINDOW)
        mu_b = uniform_filter(fb, SSIM_WINDOW)
        var_a = uniform_filter(fa * fa, SSIM_WINDOW) - mu_a**2
        var_b = uniform_filter(fb * fb, SSIM_WINDOW) - mu_b**2
        cov = uniform_filter(fa * fb, SSIM_WINDOW) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))
