"""Batch driver: simulate, reconstruct and run the desk-scale studies.

Commands operate on a flat key=value config file with [section] headers;
unknown keys are rejected so typos fail loudly.  Simulation writes the
ground truth, coil maps, mask and k-space as LSDV files; reconstruction
reads them back and emits a CSV trace, an SVG convergence plot and PGM
image dumps.  Grid, extrapolation, ablation and uncertainty commands wrap
repeated reconstructions.

Exit codes: 0 success, 1 usage/config error, 2 input validation error,
3 numerical abort.
"""

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import fileio
from .eadmm import RunReport, SolverAbort, SolverConfig, classical_ls, run
from .forward_model import KSpaceData, adjoint, forward, make_mask
from .metrics import MonitorRow, extrapolation_bounds
from .metrics import psnr as psnr_metric
from .metrics import ssim as ssim_metric
from .phantom import PhantomSpec, make_coils, make_phantom
from .rng import rng_for
from .volume import CineVolume

__all__ = ["main", "load_config", "ConfigError", "STD_A"]

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3

# the named standard phantom instance used throughout the test suite
STD_A = {
    "phantom.dims": "64x64x8",
    "phantom.coils": "4",
    "phantom.seed": "7",
    "sampling.af": "4",
    "sampling.center_lines": "0",
    "sampling.noise_std": "0.04",
}


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "phantom": {
        "dims": str,                    # HxWxT, required
        "background_ellipses": int,
        "moving_ellipses": int,
        "motion_amplitude": float,
        "coils": int,
        "seed": int,
    },
    "sampling": {
        "af": float,
        "center_lines": int,
        "noise_std": float,
    },
    "solver": {
        "lambda_lowrank": float,
        "lambda_sparse": float,
        "rho_lowrank": float,
        "rho_sparse": float,
        "alpha": float,
        "beta": float,
        "iterations": int,
        "inner_prox_steps": int,
        "adam_steps": int,
        "learning_rate": float,
        "sigma_z": float,
        "eps0_rel": float,
        "transform": str,
        "seed": int,
        "latent_channels": int,
        "hidden_channels": str,         # comma-separated widths
        "adam_warm_start": bool,
        "single_network": bool,
        "opnorm_iters": int,
        "classical_iters": int,
    },
}

_DEFAULTS = {
    "phantom.background_ellipses": 4,
    "phantom.moving_ellipses": 3,
    "phantom.motion_amplitude": 4.0,
    "phantom.coils": 4,
    "phantom.seed": 7,
    "sampling.af": 4.0,
    "sampling.center_lines": 6,
    "sampling.noise_std": 0.0,
    "solver.classical_iters": 100,
}


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def load_config(path: str, overrides: dict[str, str] | None = None) -> dict:
    """Parse a sectioned key=value file into a flat 'section.key' dict."""
    values: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    section = None
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"{path}:{ln}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value")
        if section is None:
            raise ConfigError(f"{path}:{ln}: key outside any [section]")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(f"{path}:{ln}: unknown key '{key}' "
                              f"in section [{section}]")
        values[f"{section}.{key}"] = val.strip()
    if overrides:
        values.update(overrides)
    if "phantom.dims" not in values:
        raise ConfigError(f"{path}: missing required field 'dims' "
                          "in section [phantom]")
    out = dict(_DEFAULTS)
    for full_key, raw_val in values.items():
        section, key = full_key.split(".", 1)
        typ = _SCHEMA[section][key]
        try:
            if typ is bool:
                out[full_key] = _parse_bool(raw_val)
            else:
                out[full_key] = typ(raw_val)
        except ValueError as e:
            raise ConfigError(f"{path}: field '{key}': {e}") from e
    return out


def _parse_dims(s: str) -> tuple[int, int, int]:
    parts = s.lower().split("x")
    if len(parts) != 3:
        raise ConfigError(f"dims must look like 64x64x8, got {s!r}")
    h, w, t = (int(p) for p in parts)
    return h, w, t


def solver_config_from(cfg: dict, **extra) -> SolverConfig:
    """Build a SolverConfig from the [solver] section plus overrides."""
    kwargs = {}
    for f in dataclasses.fields(SolverConfig):
        key = f"solver.{f.name}"
        if key in cfg:
            kwargs[f.name] = cfg[key]
    if "hidden_channels" in kwargs:
        kwargs["hidden_channels"] = tuple(
            int(x) for x in str(kwargs["hidden_channels"]).split(",") if x)
    kwargs.update(extra)
    return SolverConfig(**kwargs)


def _sim_arrays(cfg: dict):
    dims = _parse_dims(cfg["phantom.dims"])
    spec = PhantomSpec(
        dims=dims,
        background_ellipses=cfg["phantom.background_ellipses"],
        moving_ellipses=cfg["phantom.moving_ellipses"],
        motion_amplitude=cfg["phantom.motion_amplitude"],
        seed=cfg["phantom.seed"],
    )
    truth = make_phantom(spec)
    h, w, t = dims
    coils = make_coils(h, w, cfg["phantom.coils"], cfg["phantom.seed"])
    mask = make_mask(w, cfg["sampling.af"], cfg["sampling.center_lines"],
                     cfg["phantom.seed"])
    y = forward(truth, coils, mask)
    noise_std = cfg["sampling.noise_std"]
    if noise_std > 0:
        rng = rng_for(cfg["phantom.seed"], "noise")
        noise = noise_std * (rng.standard_normal(y.samples.shape)
                             + 1j * rng.standard_normal(y.samples.shape))
        noisy = y.samples + noise
        noisy[:, :, ~mask.column_flags, :] = 0.0
        y = KSpaceData(samples=noisy, mask=mask)
    return truth, coils, mask, y


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _seed_override(args))
    truth, coils, mask, y = _sim_arrays(cfg)
    os.makedirs(args.out, exist_ok=True)
    fileio.write_volume(os.path.join(args.out, "truth.lsdv"), truth)
    fileio.write_coils(os.path.join(args.out, "coils.lsdv"), coils)
    fileio.write_mask(os.path.join(args.out, "mask.lsdv"), mask)
    fileio.write_kspace(os.path.join(args.out, "kspace.lsdv"), y)
    if not args.quiet:
        print(f"wrote 4 files to {args.out}")
        print(f"mask: {len(mask.selected)} of {mask.width} lines, "
              f"nominal AF {mask.af:g}, achieved AF {mask.achieved_af:.3f}, "
              f"{mask.center_lines} center lines")
    return EXIT_OK


def _load_inputs(in_dir: str):
    truth_path = os.path.join(in_dir, "truth.lsdv")
    truth = fileio.read_volume(truth_path) if os.path.exists(truth_path) else None
    coils = fileio.read_coils(os.path.join(in_dir, "coils.lsdv"))
    y = fileio.read_kspace(os.path.join(in_dir, "kspace.lsdv"))
    return truth, coils, y


def _write_frames(out_dir: str, tag: str, vol: CineVolume, window_hi: float):
    mid = vol.dims[2] // 2
    fileio.write_pgm(os.path.join(out_dir, f"{tag}_f{mid}.pgm"),
                     np.abs(vol.data[:, :, mid]), (0.0, window_hi))


def _write_trace_csv(path: str, rows: list[MonitorRow]):
    fileio.write_csv(path, MonitorRow.CSV_HEADER, [r.csv_row() for r in rows])


def _reconstruct(method: str, cfg: dict, truth, coils, y,
                 out_dir: str | None, quiet: bool = True):
    """Run one reconstruction; optionally write all artifacts."""
    scfg = solver_config_from(cfg)
    report = None
    if method == "adjoint":
        x_hat = adjoint(y, coils)
        rows = []
    elif method == "classical":
        trace: list[float] = []
        x_hat = classical_ls(y, coils, scfg.lambda_lowrank, scfg.lambda_sparse,
                             scfg.transform, cfg["solver.classical_iters"],
                             objective_trace=trace)
        rows = trace
    elif method == "lsdip":
        report = run(y, coils, scfg, truth=truth)
        x_hat = report.x_hat
        rows = report.rows
    else:
        raise ConfigError(f"unknown method {method!r}")

    p = s = float("nan")
    if truth is not None:
        p = psnr_metric(x_hat, truth)
        s = ssim_metric(x_hat, truth)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        fileio.write_volume(os.path.join(out_dir, "recon.lsdv"), x_hat)
        peak = float(np.abs((truth or x_hat).data).max())
        _write_frames(out_dir, "recon", x_hat, peak)
        if truth is not None:
            err = CineVolume(np.abs(x_hat.data) - np.abs(truth.data))
            _write_frames(out_dir, "error", err, peak)
        if method == "lsdip":
            fileio.write_volume(os.path.join(out_dir, "recon_lowrank.lsdv"),
                                report.lowrank)
            fileio.write_volume(os.path.join(out_dir, "recon_sparse.lsdv"),
                                report.sparse)
            _write_frames(out_dir, "lowrank", report.lowrank, peak)
            _write_frames(out_dir, "sparse", report.sparse, peak)
            _write_trace_csv(os.path.join(out_dir, "trace.csv"), rows)
            ks = np.array([r.k for r in rows], dtype=float)
            series = [(ks, np.array([r.lyapunov for r in rows]), "merit")]
            if truth is not None:
                series.append((ks, np.array([r.psnr for r in rows]), "PSNR"))
            fileio.write_svg_lines(os.path.join(out_dir, "convergence.svg"),
                                   series, title="convergence",
                                   xlabel="outer iteration")
        elif method == "classical" and rows:
            fileio.write_csv(os.path.join(out_dir, "trace.csv"),
                             ["iter", "objective"],
                             [[i, v] for i, v in enumerate(rows)])
        fileio.write_csv(os.path.join(out_dir, "summary.csv"),
                         ["method", "psnr", "ssim"], [[method, p, s]])
    if not quiet:
        extra = (f", wall {report.wall_seconds:.1f}s"
                 if report is not None else "")
        print(f"{method}: PSNR {p:.2f} dB, SSIM {s:.4f}{extra}")
    return x_hat, p, s, report


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config, _seed_override(args))
    truth, coils, y = _load_inputs(args.inputs)
    _reconstruct(args.method, cfg, truth, coils, y, args.out,
                 quiet=args.quiet)
    return EXIT_OK


def _parallel_map(fn, items):
    n = max(1, int(os.environ.get("LSDIP_THREADS", "1")))
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def cmd_grid(args) -> int:
    cfg = load_config(args.config, _seed_override(args))
    truth, coils, y = _load_inputs(args.inputs)
    lam_l = _floats(args.lambda_lowrank)
    lam_s = _floats(args.lambda_sparse)
    if not lam_l or not lam_s:
        raise ConfigError("grid needs nonempty lambda lists")
    cells = [(ll, ls) for ll in lam_l for ls in lam_s]

    def cell(pair):
        ll, ls = pair
        try:
            scfg = solver_config_from(cfg, lambda_lowrank=ll, lambda_sparse=ls)
            report = run(y, coils, scfg, truth=truth)
            return report.final_psnr
        except (SolverAbort, FloatingPointError):
            return float("nan")

    psnrs = _parallel_map(cell, cells)
    best = int(np.nanargmax(psnrs)) if np.isfinite(psnrs).any() else -1
    rows = [[ll, ls, p, "*" if i == best else ""]
            for i, ((ll, ls), p) in enumerate(zip(cells, psnrs))]
    os.makedirs(args.out, exist_ok=True)
    fileio.write_csv(os.path.join(args.out, "grid.csv"),
                     ["lambda_lowrank", "lambda_sparse", "psnr", "best"], rows)
    if not args.quiet:
        for row in rows:
            print(f"lambda_L={row[0]:g} lambda_S={row[1]:g} "
                  f"PSNR={row[2]:.2f} {row[3]}")
    return EXIT_OK


def _iters_to_target(rows: list[MonitorRow], target: float) -> float:
    for r in rows:
        if np.isfinite(r.psnr) and r.psnr >= target:
            return r.k
    return float("nan")


def cmd_extrapolation(args) -> int:
    cfg = load_config(args.config, _seed_override(args))
    truth, coils, y = _load_inputs(args.inputs)
    if truth is None:
        raise ConfigError("extrapolation study needs truth.lsdv for PSNR")
    alphas = _floats(args.alpha)
    betas = _floats(args.beta)
    pairs = [(a, b) for a in alphas for b in betas]
    if (0.0, 0.0) not in pairs:
        pairs.insert(0, (0.0, 0.0))

    if args.psnr_target is not None:
        target = args.psnr_target
    else:
        target = psnr_metric(adjoint(y, coils), truth) + 3.0
    if target <= 0:
        raise ConfigError("psnr target must be positive")

    def cell(pair):
        a, b = pair
        scfg = solver_config_from(cfg, alpha=a, beta=b)
        report = run(y, coils, scfg, truth=truth)
        th = report.theory
        if 0.0 < th.delta_u < th.tau_u:
            a_max, b_max = extrapolation_bounds(th.l_f, th.eta1, th.eta2,
                                                th.delta_u, th.tau_u)
        else:
            a_max, b_max = 0.0, 0.0
        admissible = th.admissible and a < a_max and b < b_max
        return report, admissible

    results = _parallel_map(cell, pairs)
    rows = []
    series = []
    for (a, b), (report, admissible) in zip(pairs, results):
        it = _iters_to_target(report.rows, target)
        rows.append([a, b, target, it, report.final_psnr,
                     "yes" if admissible else "no"])
        ks = np.array([r.k for r in report.rows], dtype=float)
        ps = np.array([r.psnr for r in report.rows])
        series.append((ks, ps, f"a={a:g} b={b:g}"))
    os.makedirs(args.out, exist_ok=True)
    fileio.write_csv(os.path.join(args.out, "extrapolation.csv"),
                     ["alpha", "beta", "psnr_target", "iters_to_target",
                      "final_psnr", "admissible"], rows)
    fileio.write_svg_lines(os.path.join(args.out, "extrapolation.svg"),
                           series, title="PSNR vs iteration",
                           xlabel="outer iteration", ylabel="PSNR (dB)")
    if not args.quiet:
        for row in rows:
            print(f"alpha={row[0]:g} beta={row[1]:g} iters-to-"
                  f"{row[2]:.1f}dB: {row[3]} (admissible: {row[5]})")
    return EXIT_OK


ABLATION_VARIANTS = ["full", "single_network", "no_sparse", "no_lowrank"]


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, _seed_override(args))
    truth, coils, y = _load_inputs(args.inputs)

    def variant_config(name):
        if name == "full":
            return solver_config_from(cfg)
        if name == "single_network":
            return solver_config_from(cfg, single_network=True)
        if name == "no_sparse":
            return solver_config_from(cfg, lambda_sparse=0.0)
        if name == "no_lowrank":
            return solver_config_from(cfg, lambda_lowrank=0.0)
        raise ConfigError(f"unknown variant {name}")

    def cell(name):
        report = run(y, coils, variant_config(name), truth=truth)
        return report.final_psnr, report.final_ssim

    results = _parallel_map(cell, ABLATION_VARIANTS)
    rows = [[name, p, s] for name, (p, s) in zip(ABLATION_VARIANTS, results)]
    os.makedirs(args.out, exist_ok=True)
    fileio.write_csv(os.path.join(args.out, "ablation.csv"),
                     ["variant", "psnr", "ssim"], rows)
    if not args.quiet:
        for name, p, s in rows:
            print(f"{name}: PSNR {p:.2f} dB, SSIM {s:.4f}")
    return EXIT_OK


def cmd_uncertainty(args) -> int:
    cfg = load_config(args.config, _seed_override(args))
    truth, coils, y = _load_inputs(args.inputs)
    if args.seeds < 2:
        raise ConfigError("need at least 2 seeds")
    base_seed = cfg.get("solver.seed", SolverConfig().seed)

    def cell(i):
        scfg = solver_config_from(cfg, seed=base_seed + i)
        report = run(y, coils, scfg, truth=truth)
        return report

    reports = _parallel_map(cell, range(args.seeds))
    mags = np.stack([np.abs(r.x_hat.data) for r in reports])
    mean_img = mags.mean(axis=0)
    std_img = mags.std(axis=0)
    os.makedirs(args.out, exist_ok=True)
    mid = mean_img.shape[2] // 2
    peak = float(np.abs((truth.data if truth is not None else mean_img)).max())
    fileio.write_pgm(os.path.join(args.out, f"mean_f{mid}.pgm"),
                     mean_img[:, :, mid], (0.0, peak))
    fileio.write_pgm(os.path.join(args.out, f"std_f{mid}.pgm"),
                     std_img[:, :, mid],
                     (0.0, max(float(std_img.max()), 1e-12)))
    rows = [[base_seed + i, r.final_psnr, r.final_ssim]
            for i, r in enumerate(reports)]
    if truth is not None:
        mean_psnr = psnr_metric(CineVolume(mean_img.astype(complex)), truth)
        rows.append(["mean_image", mean_psnr, float("nan")])
    fileio.write_csv(os.path.join(args.out, "uncertainty.csv"),
                     ["seed", "psnr", "ssim"], rows)
    if not args.quiet:
        for row in rows:
            print(f"seed {row[0]}: PSNR {row[1]:.2f} dB")
    return EXIT_OK


def _seed_override(args) -> dict[str, str]:
    if getattr(args, "seed", None) is None:
        return {}
    return {"phantom.seed": str(args.seed), "solver.seed": str(args.seed)}


def _add_common(p, with_inputs=True):
    p.add_argument("--config", required=True, help="config file path")
    p.add_argument("--out", required=True, help="output directory")
    if with_inputs:
        p.add_argument("--in", dest="inputs", required=True,
                       help="directory with simulate outputs")
    p.add_argument("--seed", type=int, default=None,
                   help="override phantom and solver seeds")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lsdip",
        description="dynamic MRI reconstruction with dual untrained "
                    "generators (low-rank plus sparse)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate phantom, coils, mask, k-space")
    _add_common(p, with_inputs=False)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run one reconstruction")
    _add_common(p)
    p.add_argument("--method", choices=["lsdip", "classical", "adjoint"],
                   default="lsdip")
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("grid", help="regularization-weight grid search")
    _add_common(p)
    p.add_argument("--lambda-lowrank", default="0.05,0.1,0.2,0.5")
    p.add_argument("--lambda-sparse", default="1e-4,2e-4,5e-4,1e-3")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("extrapolation", help="speedup study over (alpha, beta)")
    _add_common(p)
    p.add_argument("--alpha", default="0,0.5")
    p.add_argument("--beta", default="0,0.5")
    p.add_argument("--psnr-target", type=float, default=None)
    p.set_defaults(fn=cmd_extrapolation)

    p = sub.add_parser("ablate", help="run the four model variants")
    _add_common(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("uncertainty", help="seed-variability study")
    _add_common(p)
    p.add_argument("--seeds", type=int, default=4)
    p.set_defaults(fn=cmd_uncertainty)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (fileio.FormatError, FileNotFoundError, ValueError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverAbort, FloatingPointError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
