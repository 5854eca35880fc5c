"""Extrapolated ADMM solver for the dual-generator low-rank plus sparse model.

One outer iteration, in order: current generator outputs, extrapolate the
sparse auxiliary variable, inexact proximal-gradient solve of the low-rank
auxiliary subproblem (singular value thresholding), extrapolate, solve the
sparse auxiliary subproblem (soft-thresholding in the transform domain),
fit both generators to their penalty targets with a descent guarantee, then
update the scaled duals with the primal residuals.

Also houses the classical (generator-free) low-rank plus sparse baseline,
solved by proximal-gradient alternation with a monotone step size.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .forward_model import (CoilSensitivities, KSpaceData, SamplingMask,
                            adjoint, estimate_op_norm_sq, forward)
from .generator import (GeneratorArch, GeneratorParams, fit_generator,
                        gen_forward, gen_forward_pair, init_generator)
from .metrics import MonitorRow, TheoryParams, lagrangian_value, lyapunov
from .metrics import psnr as psnr_metric
from .metrics import ssim as ssim_metric
from .prox import SparsifyingTransform, prox_l1_in_transform, svt
from .volume import CineVolume, from_casorati, to_casorati

__all__ = ["SolverConfig", "SolverState", "FitRecord", "RunReport",
           "SolverAbort", "ForwardOp", "init_state", "v_update", "u_update",
           "dual_update", "run", "classical_ls"]


class SolverAbort(RuntimeError):
    """Non-finite state encountered; carries the partial trace."""

    def __init__(self, message: str, rows: list):
        super().__init__(message)
        self.rows = rows


@dataclass(frozen=True)
class SolverConfig:
    lambda_lowrank: float = 0.2
    lambda_sparse: float = 2e-4
    rho_lowrank: float = 2.5
    rho_sparse: float = 2.5
    alpha: float = 0.5
    beta: float = 0.5
    iterations: int = 200
    inner_prox_steps: int = 1
    adam_steps: int = 20
    learning_rate: float = 3e-4
    sigma_z: float = 0.1
    eps0_rel: float = 1e-3        # eps_0 = eps0_rel * ||Y||_F^2
    transform: str = "identity"
    seed: int = 1
    latent_channels: int = 16
    hidden_channels: tuple[int, ...] = (8, 8)
    adam_warm_start: bool = True
    single_network: bool = False
    opnorm_iters: int = 30

    def __post_init__(self):
        if self.lambda_lowrank < 0 or self.lambda_sparse < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.rho_lowrank <= 0 or self.rho_sparse <= 0:
            raise ValueError("penalty parameters must be positive")
        if not (0 <= self.alpha < 1 and 0 <= self.beta < 1):
            raise ValueError("extrapolation weights must lie in [0, 1)")
        if self.iterations < 1 or self.inner_prox_steps < 1:
            raise ValueError("iteration counts must be >= 1")
        SparsifyingTransform(self.transform)  # validates the kind

    def arch(self) -> GeneratorArch:
        out = 4 if self.single_network else 2
        return GeneratorArch((self.latent_channels, *self.hidden_channels, out))


@dataclass
class SolverState:
    v: np.ndarray                 # low-rank auxiliary, HW x T
    u: np.ndarray                 # sparse auxiliary
    v_prev: np.ndarray
    u_prev: np.ndarray
    d_l: np.ndarray               # scaled duals
    d_s: np.ndarray
    gen_l: GeneratorParams
    gen_s: GeneratorParams | None  # None when a single network emits both
    k: int = 0


@dataclass(frozen=True)
class FitRecord:
    """Per-iteration generator-fit bookkeeping for the descent audit."""

    k: int
    eps_k: float
    loss_init_lowrank: float
    loss_final_lowrank: float
    accepted_lowrank: bool
    loss_init_sparse: float
    loss_final_sparse: float
    accepted_sparse: bool


@dataclass
class RunReport:
    config: SolverConfig
    x_hat: CineVolume
    lowrank: CineVolume
    sparse: CineVolume
    rows: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    wall_seconds: float = 0.0
    final_psnr: float = float("nan")
    final_ssim: float = float("nan")
    op_norm_sq: float = float("nan")
    theory: TheoryParams | None = None


class ForwardOp:
    """Acquisition operator applied to HW x T matrices, plus its adjoint."""

    def __init__(self, coils: CoilSensitivities, mask: SamplingMask,
                 dims: tuple[int, int, int]):
        self.coils = coils
        self.mask = mask
        self.dims = dims

    def apply(self, m: np.ndarray) -> np.ndarray:
        return forward(from_casorati(m, self.dims), self.coils,
                       self.mask).samples

    def apply_adjoint(self, samples: np.ndarray) -> np.ndarray:
        y = KSpaceData(samples=samples, mask=self.mask)
        return to_casorati(adjoint(y, self.coils))

    def data_grad(self, m: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Gradient of 0.5*||y - A m||^2 at m (y given as raw samples)."""
        return self.apply_adjoint(self.apply(m) - y)

    def op_norm_sq(self, iters: int = 30) -> float:
        return estimate_op_norm_sq(self.coils, self.mask, self.dims, iters)


def _gen_outputs(state: SolverState) -> tuple[CineVolume, CineVolume]:
    if state.gen_s is None:
        return gen_forward_pair(state.gen_l)
    return gen_forward(state.gen_l), gen_forward(state.gen_s)


def init_state(y: KSpaceData, coils: CoilSensitivities,
               cfg: SolverConfig) -> SolverState:
    """Adjoint image, temporal-mean low-rank split, zero duals, fresh nets."""
    c, h, w, t = y.dims
    x0 = to_casorati(adjoint(y, coils))
    l0 = np.repeat(x0.mean(axis=1, keepdims=True), t, axis=1)
    s0 = x0 - l0
    arch = cfg.arch()
    gen_l = init_generator(arch, (h, w, t), cfg.sigma_z, cfg.seed, "lowrank")
    gen_s = (None if cfg.single_network else
             init_generator(arch, (h, w, t), cfg.sigma_z, cfg.seed, "sparse"))
    return SolverState(v=l0.copy(), u=s0.copy(), v_prev=l0.copy(),
                       u_prev=s0.copy(), d_l=np.zeros_like(l0),
                       d_s=np.zeros_like(s0), gen_l=gen_l, gen_s=gen_s)


def _prox_grad_sweep(start: np.ndarray, other: np.ndarray, anchor: np.ndarray,
                     y: np.ndarray, fm: ForwardOp, rho: float, l_f: float,
                     n_steps: int, prox) -> np.ndarray:
    """Shared inexact solve for both auxiliary subproblems.

    Minimizes 0.5*||y - A(x + other)||^2 + reg(x) + (rho/2)*||x - anchor||^2
    by proximal-gradient steps with the monotone step size 1/(l_f + rho);
    `prox` applies the scaled regularizer prox.
    """
    step = 1.0 / (l_f + rho)
    x = start
    for _ in range(n_steps):
        grad = fm.data_grad(x + other, y) + rho * (x - anchor)
        x = prox(x - step * grad, step)
    return x


def v_update(state: SolverState, cfg: SolverConfig, fm: ForwardOp,
             y: np.ndarray, u_bar: np.ndarray, l_k: np.ndarray,
             l_f: float, start: np.ndarray | None = None) -> np.ndarray:
    """Low-rank auxiliary update: gradient step then singular value shrinkage.

    `start` overrides the inner warm start (default: the current iterate,
    which makes each sweep monotone in the subproblem objective).
    """
    anchor = l_k - state.d_l
    return _prox_grad_sweep(
        state.v if start is None else start, u_bar, anchor, y, fm,
        cfg.rho_lowrank, l_f, cfg.inner_prox_steps,
        lambda m, s: svt(m, cfg.lambda_lowrank * s))


def u_update(state: SolverState, cfg: SolverConfig, fm: ForwardOp,
             y: np.ndarray, v_bar: np.ndarray, s_k: np.ndarray,
             l_f: float, start: np.ndarray | None = None) -> np.ndarray:
    """Sparse auxiliary update: gradient step then transform-domain shrinkage."""
    anchor = s_k - state.d_s
    w = SparsifyingTransform(cfg.transform)
    return _prox_grad_sweep(
        state.u if start is None else start, v_bar, anchor, y, fm,
        cfg.rho_sparse, l_f, cfg.inner_prox_steps,
        lambda m, s: prox_l1_in_transform(m, cfg.lambda_sparse * s, w))


def dual_update(state: SolverState, l_new: np.ndarray,
                s_new: np.ndarray) -> tuple[float, float]:
    """Add primal residuals to the scaled duals; returns the residual norms."""
    res_l = state.v - l_new
    res_s = state.u - s_new
    state.d_l = state.d_l + res_l
    state.d_s = state.d_s + res_s
    return float(np.linalg.norm(res_l)), float(np.linalg.norm(res_s))


def _penalty_loss(out: np.ndarray, target: np.ndarray, rho: float) -> float:
    diff = out - target
    return 0.5 * rho * float(np.vdot(diff, diff).real)


def run(y: KSpaceData, coils: CoilSensitivities, cfg: SolverConfig,
        truth: CineVolume | None = None, callback=None) -> RunReport:
    """Full solve; returns the reconstruction, components and monitor trace."""
    t_start = time.perf_counter()
    c, h, w, t = y.dims
    dims = (h, w, t)
    fm = ForwardOp(coils, y.mask, dims)
    l_f = fm.op_norm_sq(cfg.opnorm_iters)
    y_samples = y.samples
    y_cas_energy = float(np.vdot(y_samples, y_samples).real)
    eps0 = cfg.eps0_rel * y_cas_energy
    transform = SparsifyingTransform(cfg.transform)
    theory = TheoryParams(l_f=l_f, alpha=cfg.alpha, beta=cfg.beta,
                          tau_v=cfg.rho_lowrank, tau_u=cfg.rho_sparse)

    state = init_state(y, coils, cfg)
    lvol, svol = _gen_outputs(state)
    l_cas, s_cas = to_casorati(lvol), to_casorati(svol)

    rows: list[MonitorRow] = []
    fits: list[FitRecord] = []

    def metrics_of(x_cas: np.ndarray) -> tuple[float, float]:
        if truth is None:
            return float("nan"), float("nan")
        vol = from_casorati(x_cas, dims)
        return psnr_metric(vol, truth), ssim_metric(vol, truth)

    def make_row(k, dv, du, res_l, res_s, loss_l, loss_s, eps_k):
        lagr = lagrangian_value(
            y_samples, fm.apply,
            state.v, state.u, l_cas, s_cas, state.d_l, state.d_s,
            cfg.lambda_lowrank, cfg.lambda_sparse,
            cfg.rho_lowrank, cfg.rho_sparse, transform)
        psi = lyapunov(lagr, dv, du, theory.delta_v, theory.delta_u)
        p, s = metrics_of(l_cas + s_cas)
        return MonitorRow(k=k, lagrangian=lagr, lyapunov=psi, dv=dv, du=du,
                          res_lowrank=res_l, res_sparse=res_s,
                          loss_lowrank=loss_l, loss_sparse=loss_s,
                          eps_k=eps_k, psnr=p, ssim=s)

    rows.append(make_row(0, 0.0, 0.0,
                         float(np.linalg.norm(state.v - l_cas)),
                         float(np.linalg.norm(state.u - s_cas)),
                         float("nan"), float("nan"), 0.0))

    for k in range(cfg.iterations):
        eps_k = eps0 / (k + 1) ** 2
        u_bar = state.u + cfg.beta * (state.u - state.u_prev)
        # the inexact inner solves warm start from the momentum point of
        # their own block; with alpha = beta = 0 this is the plain iterate
        v_start = state.v + cfg.alpha * (state.v - state.v_prev)
        v_new = v_update(state, cfg, fm, y_samples, u_bar, l_cas, l_f,
                         start=v_start)
        v_bar = v_new + cfg.alpha * (v_new - state.v)
        state.v_prev, dv = state.v, float(np.linalg.norm(v_new - state.v))
        state.v = v_new
        u_new = u_update(state, cfg, fm, y_samples, v_bar, s_cas, l_f,
                         start=u_bar)
        state.u_prev, du = state.u, float(np.linalg.norm(u_new - state.u))
        state.u = u_new

        target_l = from_casorati(state.v + state.d_l, dims)
        target_s = from_casorati(state.u + state.d_s, dims)
        if not cfg.adam_warm_start:
            state.gen_l.adam_m[:] = 0.0
            state.gen_l.adam_v[:] = 0.0
            state.gen_l.adam_step = 0
            if state.gen_s is not None:
                state.gen_s.adam_m[:] = 0.0
                state.gen_s.adam_v[:] = 0.0
                state.gen_s.adam_step = 0

        if state.gen_s is None:
            loss0_l = _penalty_loss(l_cas, state.v + state.d_l, cfg.rho_lowrank)
            loss0_s = _penalty_loss(s_cas, state.u + state.d_s, cfg.rho_sparse)
            targets = [(0, target_l.data, cfg.rho_lowrank),
                       (2, target_s.data, cfg.rho_sparse)]
            _, loss_tot, accepted = fit_generator(
                state.gen_l, targets, cfg.adam_steps, cfg.learning_rate,
                2.0 * eps_k)
            lvol, svol = gen_forward_pair(state.gen_l)
            l_cas, s_cas = to_casorati(lvol), to_casorati(svol)
            loss_l = _penalty_loss(l_cas, state.v + state.d_l, cfg.rho_lowrank)
            loss_s = _penalty_loss(s_cas, state.u + state.d_s, cfg.rho_sparse)
            fits.append(FitRecord(k, eps_k, loss0_l, loss_l, accepted,
                                  loss0_s, loss_s, accepted))
        else:
            loss0_l = _penalty_loss(l_cas, state.v + state.d_l, cfg.rho_lowrank)
            _, loss_l, acc_l = fit_generator(
                state.gen_l, target_l, cfg.adam_steps, cfg.learning_rate,
                eps_k, rho=cfg.rho_lowrank)
            loss0_s = _penalty_loss(s_cas, state.u + state.d_s, cfg.rho_sparse)
            _, loss_s, acc_s = fit_generator(
                state.gen_s, target_s, cfg.adam_steps, cfg.learning_rate,
                eps_k, rho=cfg.rho_sparse)
            lvol = gen_forward(state.gen_l)
            svol = gen_forward(state.gen_s)
            l_cas, s_cas = to_casorati(lvol), to_casorati(svol)
            fits.append(FitRecord(k, eps_k, loss0_l, loss_l, acc_l,
                                  loss0_s, loss_s, acc_s))

        res_l, res_s = dual_update(state, l_cas, s_cas)
        state.k = k + 1

        for name, arr in (("V", state.v), ("U", state.u),
                          ("D_L", state.d_l), ("D_S", state.d_s)):
            if not np.all(np.isfinite(arr.view(np.float64))):
                raise SolverAbort(
                    f"non-finite {name} at outer iteration {k}", rows)

        row = make_row(k + 1, dv, du, res_l, res_s, loss_l, loss_s, eps_k)
        rows.append(row)
        if callback is not None:
            callback(row)

    x_hat = CineVolume(lvol.data + svol.data)
    report = RunReport(config=cfg, x_hat=x_hat, lowrank=lvol, sparse=svol,
                       rows=rows, fits=fits,
                       wall_seconds=time.perf_counter() - t_start,
                       op_norm_sq=l_f, theory=theory)
    if truth is not None:
        report.final_psnr = psnr_metric(x_hat, truth)
        report.final_ssim = ssim_metric(x_hat, truth)
    return report


def subproblem_objective_v(m, u_bar, anchor, y_samples, fm, lam, rho):
    """Objective of the low-rank auxiliary subproblem, for monotonicity tests."""
    resid = y_samples - fm.apply(m + u_bar)
    return (0.5 * float(np.vdot(resid, resid).real)
            + lam * float(np.linalg.svd(m, compute_uv=False).sum())
            + 0.5 * rho * float(np.linalg.norm(m - anchor) ** 2))


def subproblem_objective_u(m, v_bar, anchor, y_samples, fm, lam, rho,
                           transform):
    """Objective of the sparse auxiliary subproblem."""
    resid = y_samples - fm.apply(m + v_bar)
    return (0.5 * float(np.vdot(resid, resid).real)
            + lam * float(np.abs(transform.apply(m)).sum())
            + 0.5 * rho * float(np.linalg.norm(m - anchor) ** 2))


def classical_ls(y: KSpaceData, coils: CoilSensitivities, lambda_lowrank: float,
                 lambda_sparse: float, transform: str = "identity",
                 iters: int = 100,
                 objective_trace: list | None = None) -> CineVolume:
    """Generator-free low-rank plus sparse baseline (proximal gradient).

    Joint gradient step on the data term with step size 1/(2*||A||^2), then
    singular-value shrinkage of the low-rank block and transform-domain
    soft-thresholding of the sparse block.  The objective is non-increasing.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    c, h, w, t = y.dims
    dims = (h, w, t)
    fm = ForwardOp(coils, y.mask, dims)
    l_f = fm.op_norm_sq()
    step = 1.0 / (2.0 * l_f)
    wtr = SparsifyingTransform(transform)

    x0 = to_casorati(adjoint(y, coils))
    low = np.repeat(x0.mean(axis=1, keepdims=True), t, axis=1)
    sp = x0 - low

    def objective(lo, s):
        resid = y.samples - fm.apply(lo + s)
        return (0.5 * float(np.vdot(resid, resid).real)
                + lambda_lowrank * float(np.linalg.svd(lo, compute_uv=False).sum())
                + lambda_sparse * float(np.abs(wtr.apply(s)).sum()))

    if objective_trace is not None:
        objective_trace.append(objective(low, sp))
    for _ in range(iters):
        grad = fm.data_grad(low + sp, y.samples)
        low = svt(low - step * grad, lambda_lowrank * step)
        sp = prox_l1_in_transform(sp - step * grad, lambda_sparse * step, wtr)
        if objective_trace is not None:
            objective_trace.append(objective(low, sp))
    return from_casorati(low + sp, dims)
