import os

import numpy as np
import pytest

from lsdip.cli import (ConfigError, load_config, main, solver_config_from)

TINY_CONFIG = """\
# tiny problem used by the command tests
[phantom]
dims = 16x16x4
motion_amplitude = 2.0
seed = 3

[sampling]
af = 2
center_lines = 4

[solver]
iterations = 3
adam_steps = 3
hidden_channels = 4
opnorm_iters = 15
classical_iters = 5
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY_CONFIG)
    return str(p)


@pytest.fixture
def sim_dir(tmp_path, cfg_path):
    out = str(tmp_path / "sim")
    assert main(["simulate", "--config", cfg_path, "--out", out,
                 "--quiet"]) == 0
    return out


# ----------------------------------------------------------------- config

def test_load_config_values(cfg_path):
    cfg = load_config(cfg_path)
    assert cfg["phantom.dims"] == "16x16x4"
    assert cfg["solver.iterations"] == 3
    assert cfg["sampling.af"] == 2.0
    assert cfg["sampling.noise_std"] == 0.0   # default


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[phantom]\ndims = 16x16x4\nbogus = 1\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config(str(p))


def test_unknown_section_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[nosuch]\nx = 1\n")
    with pytest.raises(ConfigError, match="nosuch"):
        load_config(str(p))


def test_missing_dims_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[phantom]\nseed = 1\n")
    with pytest.raises(ConfigError, match="dims"):
        load_config(str(p))


def test_bad_value_type_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[phantom]\ndims = 16x16x4\nseed = twelve\n")
    with pytest.raises(ConfigError, match="seed"):
        load_config(str(p))


def test_key_outside_section_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("dims = 16x16x4\n")
    with pytest.raises(ConfigError, match="section"):
        load_config(str(p))


def test_solver_config_from_parses_widths(cfg_path):
    cfg = load_config(cfg_path)
    scfg = solver_config_from(cfg)
    assert scfg.hidden_channels == (4,)
    assert scfg.iterations == 3


def test_config_error_exit_code(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[phantom]\nbogus = 1\n")
    rc = main(["simulate", "--config", str(p),
               "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 1


# ----------------------------------------------------------------- commands

def test_simulate_writes_all_files(sim_dir):
    for name in ("truth.lsdv", "coils.lsdv", "mask.lsdv", "kspace.lsdv"):
        assert os.path.exists(os.path.join(sim_dir, name))


def test_simulate_deterministic(tmp_path, cfg_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    main(["simulate", "--config", cfg_path, "--out", a, "--quiet"])
    main(["simulate", "--config", cfg_path, "--out", b, "--quiet"])
    for name in ("truth.lsdv", "kspace.lsdv"):
        ba = open(os.path.join(a, name), "rb").read()
        bb = open(os.path.join(b, name), "rb").read()
        assert ba == bb


def test_reconstruct_adjoint(tmp_path, cfg_path, sim_dir):
    out = str(tmp_path / "adj")
    rc = main(["reconstruct", "--config", cfg_path, "--in", sim_dir,
               "--out", out, "--method", "adjoint", "--quiet"])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "recon.lsdv"))
    assert os.path.exists(os.path.join(out, "summary.csv"))
    assert os.path.exists(os.path.join(out, "recon_f2.pgm"))
    assert os.path.exists(os.path.join(out, "error_f2.pgm"))


def test_reconstruct_classical_writes_trace(tmp_path, cfg_path, sim_dir):
    out = str(tmp_path / "cls")
    rc = main(["reconstruct", "--config", cfg_path, "--in", sim_dir,
               "--out", out, "--method", "classical", "--quiet"])
    assert rc == 0
    trace = open(os.path.join(out, "trace.csv")).read()
    assert trace.splitlines()[0] == "iter,objective"


def test_reconstruct_lsdip_artifacts(tmp_path, cfg_path, sim_dir):
    out = str(tmp_path / "rec")
    rc = main(["reconstruct", "--config", cfg_path, "--in", sim_dir,
               "--out", out, "--quiet"])
    assert rc == 0
    for name in ("recon.lsdv", "recon_lowrank.lsdv", "recon_sparse.lsdv",
                 "trace.csv", "convergence.svg", "summary.csv",
                 "lowrank_f2.pgm", "sparse_f2.pgm"):
        assert os.path.exists(os.path.join(out, name)), name
    header = open(os.path.join(out, "trace.csv")).readline().strip()
    assert header.split(",")[:3] == ["k", "lagrangian", "lyapunov"]


def test_reconstruct_trace_byte_identical(tmp_path, cfg_path, sim_dir):
    a, b = str(tmp_path / "r1"), str(tmp_path / "r2")
    for out in (a, b):
        assert main(["reconstruct", "--config", cfg_path, "--in", sim_dir,
                     "--out", out, "--quiet"]) == 0
    ta = open(os.path.join(a, "trace.csv"), "rb").read()
    tb = open(os.path.join(b, "trace.csv"), "rb").read()
    assert ta == tb


def test_reconstruct_missing_inputs_exit_2(tmp_path, cfg_path):
    rc = main(["reconstruct", "--config", cfg_path,
               "--in", str(tmp_path / "nothing"),
               "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 2


def test_reconstruct_corrupt_input_exit_2(tmp_path, cfg_path, sim_dir):
    bad = str(tmp_path / "badin")
    os.makedirs(bad)
    for name in ("truth.lsdv", "coils.lsdv", "mask.lsdv", "kspace.lsdv"):
        blob = open(os.path.join(sim_dir, name), "rb").read()
        open(os.path.join(bad, name), "wb").write(blob[:-3])
    rc = main(["reconstruct", "--config", cfg_path, "--in", bad,
               "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 2


def test_grid_csv(tmp_path, cfg_path, sim_dir):
    out = str(tmp_path / "grid")
    rc = main(["grid", "--config", cfg_path, "--in", sim_dir, "--out", out,
               "--lambda-lowrank", "0.1,0.2", "--lambda-sparse", "1e-4",
               "--quiet"])
    assert rc == 0
    lines = open(os.path.join(out, "grid.csv")).read().splitlines()
    assert lines[0] == "lambda_lowrank,lambda_sparse,psnr,best"
    assert len(lines) == 3
    assert sum(1 for l in lines[1:] if l.endswith("*")) == 1


def test_extrapolation_study(tmp_path, cfg_path, sim_dir):
    out = str(tmp_path / "ext")
    rc = main(["extrapolation", "--config", cfg_path, "--in", sim_dir,
               "--out", out, "--alpha", "0,0.3", "--beta", "0,0.3",
               "--psnr-target", "5", "--quiet"])
    assert rc == 0
    lines = open(os.path.join(out, "extrapolation.csv")).read().splitlines()
    assert len(lines) == 5  # header + 4 combinations
    assert os.path.exists(os.path.join(out, "extrapolation.svg"))


def test_ablate(tmp_path, cfg_path, sim_dir):
    out = str(tmp_path / "abl")
    rc = main(["ablate", "--config", cfg_path, "--in", sim_dir,
               "--out", out, "--quiet"])
    assert rc == 0
    lines = open(os.path.join(out, "ablation.csv")).read().splitlines()
    variants = [l.split(",")[0] for l in lines[1:]]
    assert variants == ["full", "single_network", "no_sparse", "no_lowrank"]


def test_uncertainty(tmp_path, cfg_path, sim_dir):
    out = str(tmp_path / "unc")
    rc = main(["uncertainty", "--config", cfg_path, "--in", sim_dir,
               "--out", out, "--seeds", "2", "--quiet"])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "mean_f2.pgm"))
    assert os.path.exists(os.path.join(out, "std_f2.pgm"))
    lines = open(os.path.join(out, "uncertainty.csv")).read().splitlines()
    assert len(lines) == 4  # header, two seeds, mean image row


def test_seed_override_changes_simulation(tmp_path, cfg_path):
    a, b = str(tmp_path / "s1"), str(tmp_path / "s2")
    main(["simulate", "--config", cfg_path, "--out", a, "--quiet"])
    main(["simulate", "--config", cfg_path, "--out", b, "--seed", "99",
          "--quiet"])
    ta = open(os.path.join(a, "truth.lsdv"), "rb").read()
    tb = open(os.path.join(b, "truth.lsdv"), "rb").read()
    assert ta != tb


def test_noise_option(tmp_path, cfg_path):
    noisy_cfg = tmp_path / "noisy.cfg"
    noisy_cfg.write_text(TINY_CONFIG + "\n[sampling]\nnoise_std = 0.05\n")
    # appending a second [sampling] section reuses the schema; keys merge
    out = str(tmp_path / "noisy")
    assert main(["simulate", "--config", str(noisy_cfg), "--out", out,
                 "--quiet"]) == 0
    from lsdip.fileio import read_kspace
    clean = str(tmp_path / "clean")
    main(["simulate", "--config", cfg_path, "--out", clean, "--quiet"])
    yn = read_kspace(os.path.join(out, "kspace.lsdv"))
    yc = read_kspace(os.path.join(clean, "kspace.lsdv"))
    assert not np.array_equal(yn.samples, yc.samples)
    # noise still confined to sampled lines
    assert np.all(yn.samples[:, :, ~yn.mask.column_flags, :] == 0)
