from __future__ import annotations

import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from twophase.constitutive import FluidParams
from twophase.errors import ConfigError
from twophase.harness import Config, dump_config, load_config, parse_config, run_cli
from twophase.models import ModelKind
from twophase.reduction import IDENTITIES


def _write_cfg(tmp_path, text):
    out = tmp_path / "out"
    path = tmp_path / "run.cfg"
    path.write_text(f"output_dir = {out}\n" + text)
    return str(path), out


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# --- parsing --------------------------------------------------------------------------


def test_empty_config_is_all_defaults():
    cfg = parse_config("")
    assert cfg == Config()
    assert cfg.params() == FluidParams()
    assert cfg.kind is ModelKind.NSK


def test_comments_blank_lines_and_values():
    cfg = parse_config("# header\n\nmodel = NSCH_general  # trailing\nn = 32\ngrids = 32, 64\nlam=0.02\n")
    assert cfg.kind is ModelKind.NSCH_GENERAL
    assert cfg.n == 32 and cfg.grids == (32, 64) and cfg.params().lam == 0.02


def test_equal_specific_volumes_rejected_with_line_and_key():
    with pytest.raises(ConfigError) as info:
        parse_config("tau1 = 1.0\ntau2 = 1.0\n")
    assert "tau* must be nonzero" in str(info.value)
    assert info.value.line == 2 and info.value.key == "tau2"


def test_tau_error_blames_tau1_when_only_tau1_set():
    with pytest.raises(ConfigError) as info:
        parse_config("# c\ntau1 = 0.5\n")
    assert info.value.line == 2 and info.value.key == "tau1"


@pytest.mark.parametrize(
    "text, line, key",
    [
        ("n = 16\nviscosity = 1\n", 2, "viscosity"),
        ("Model = NSK\n", 1, "Model"),
        ("n = sixteen\n", 1, "n"),
        ("eta = nan\n", 1, "eta"),
        ("n = 3.5\n", 1, "n"),
        ("\n\nbeta = -1\n", 3, "beta"),
        ("n = 2\n", 1, "n"),
        ("model = NSXX\n", 1, "model"),
        ("grids = 64, 100\n", 1, "grids"),
        ("n = 16\nn = 32\n", 2, "n"),
        ("residuals = stress_AC, bogus\n", 1, "residuals"),
        ("model = NSK\nresiduals = entropy_NSAC_general_particle_path\n", 2, "residuals"),
    ],
)
def test_parse_errors_name_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line and info.value.key == key
    assert f"line {line}" in str(info.value) and repr(key) in str(info.value)


def test_line_without_equals():
    with pytest.raises(ConfigError) as info:
        parse_config("n = 8\njust words\n")
    assert info.value.line == 2


@pytest.mark.parametrize(
    "text",
    ["", "model = NSAC_general\nn = 48\ndelta = 0.05\nresiduals = entropy_NSAC_general_balance\n", "identities = kinematic, w_equiv\nlength = 3.0\nseed = 7\n"],
)
def test_dump_parse_round_trip(text):
    cfg = parse_config(text)
    assert parse_config(dump_config(cfg)) == cfg


def test_load_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


# --- CLI ---------------------------------------------------------------------------------


def test_unknown_flag_and_subcommand_exit_2(tmp_path, capsys):
    assert run_cli(["verify", "x.cfg", "--frobnicate"]) == 2
    assert run_cli(["launch"]) == 2
    assert run_cli([]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path):
    path, _ = _write_cfg(tmp_path, "tau1 = 1\ntau2 = 1\n")
    assert run_cli(["simulate", path], out=io.StringIO()) == 2
    assert run_cli(["simulate", str(tmp_path / "missing.cfg")], out=io.StringIO()) == 2


def test_unknown_identity_flag_exit_2(tmp_path):
    path, _ = _write_cfg(tmp_path, "")
    assert run_cli(["verify", path, "--identity", "bogus"], out=io.StringIO()) == 2


def test_dump_config_prints_defaults():
    buf = io.StringIO()
    assert run_cli(["dump-config"], out=buf) == 0
    assert parse_config(buf.getvalue()) == Config()


def test_verify_all_identities_pass(tmp_path):
    path, out = _write_cfg(tmp_path, "grids = 64, 128\n")
    buf = io.StringIO()
    assert run_cli(["verify", path, "--identity", "all"], out=buf) == 0
    text = buf.getvalue()
    assert f"{len(IDENTITIES)}/{len(IDENTITIES)} identities pass" in text
    rows = _read_csv(out / "verify.csv")
    assert {r[0] for r in rows[1:]} >= set(IDENTITIES)


def test_verify_threshold_failure_exit_1(tmp_path):
    path, _ = _write_cfg(tmp_path, "grids = 32, 64\nmin_order = 3.0\n")
    assert run_cli(["verify", path, "--identity", "kinematic"], out=io.StringIO()) == 1


def test_converge_writes_orders(tmp_path):
    path, out = _write_cfg(tmp_path, "grids = 32, 64, 128\nidentities = kinematic\n")
    buf = io.StringIO()
    assert run_cli(["converge", path], out=buf) == 0
    rows = _read_csv(out / "converge.csv")
    assert len(rows) > 1 and "kinematic" in buf.getvalue()


def test_simulate_uniform_keeps_entropy_constant(tmp_path):
    path, out = _write_cfg(tmp_path, "preset = uniform\nn = 32\nend_time = 0.05\noutput_every = 2\n")
    assert run_cli(["simulate", path], out=io.StringIO()) == 0
    rows = _read_csv(out / "diagnostics.csv")
    col = rows[0].index("entropy")
    ent = np.array([float(r[col]) for r in rows[1:]])
    assert np.max(np.abs(ent - ent[0])) <= 1e-14 * abs(ent[0])
    assert (out / "snapshots.csv").exists()
    assert (out / "snapshot_00000_rho.csv").exists()


def test_simulate_with_residual_columns(tmp_path):
    path, out = _write_cfg(tmp_path, "model = NSAC_reduced\nn = 32\nend_time = 0.02\nresiduals = kinematic, stress_AC\n")
    assert run_cli(["simulate", path], out=io.StringIO()) == 0
    header = _read_csv(out / "diagnostics.csv")[0]
    assert header[-2:] == ["kinematic", "stress_AC"]


def test_simulate_blowup_exit_1_and_writes_failed_state(tmp_path):
    path, out = _write_cfg(tmp_path, "n = 64\nend_time = 10\ndt = 0.5\n")
    buf = io.StringIO()
    assert run_cli(["simulate", path], out=buf) == 1
    assert "aborted" in buf.getvalue()
    assert (out / "diagnostics.csv").exists()
    assert any(name.startswith("failed_state") for name in os.listdir(out))


def test_no_temporary_files_left_behind(tmp_path):
    path, out = _write_cfg(tmp_path, "n = 16\nend_time = 0.01\n")
    assert run_cli(["simulate", path], out=io.StringIO()) == 0
    assert not [n for n in os.listdir(out) if not n.endswith(".csv")]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "twophase", "dump-config"], capture_output=True, text=True)
    assert proc.returncode == 0 and "tau1 = 1.0" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "twophase", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 2
