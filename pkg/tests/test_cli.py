import csv
import json
import subprocess
import sys

import pytest

from atomchain.cli import main
from atomchain.config import ConfigError, config_from_document, dump_config, load_config

BASE = """
[emitter]
omega = 1e14
mu_mag = 1e-30
mu_hat = [0.0, 0.0, 1.0]

[bath]
T = 361.0

[drive]
gamma_in_rel = 1e-3
gamma_out_rel = 1e2

[geometry]
n_atoms = 4
a = 1e-7
d = 1.03e-6
"""

REORDERED = """
[geometry]
d = 1.03e-6
a = 1e-7
n_atoms = 4

[drive]
gamma_out_rel = 1e2
gamma_in_rel = 1e-3

[bath]
T = 361.0

[emitter]
mu_hat = [0.0, 0.0, 1.0]
mu_mag = 1e-30
omega = 1e14
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "chain.toml"
    path.write_text(BASE)
    return path


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


# ---------------------------------------------------------------- config


def test_hash_stable_under_key_reordering(tmp_path, cfg_file):
    other = tmp_path / "other.toml"
    other.write_text(REORDERED)
    assert load_config(cfg_file).config_hash() == load_config(other).config_hash()


def test_written_config_reloads_to_same_hash(tmp_path, cfg_file):
    cfg = load_config(cfg_file)
    again = load_config(dump_config(cfg, tmp_path / "copy.toml"))
    assert again.config_hash() == cfg.config_hash()
    assert again == cfg


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"geometry": {"n_atoms": 4}}, "bath.T"),
        ({"bath": {"T": "hot"}, "geometry": {"n_atoms": 4}}, "bath.T"),
        ({"bath": {"T": 300.0}}, "geometry"),
        ({"bath": {"T": 300.0}, "geometry": {"n_atoms": 4, "gaps": [1e-7]}}, "geometry"),
        ({"bath": {"T": 300.0}, "geometry": {"n_atoms": 4}, "drive": {"gamma_in": 1.0, "gamma_in_rel": 1e-3}}, "drive.gamma_in"),
        ({"bath": {"T": 300.0}, "geometry": {"n_atoms": 4}, "emitter": {"mu_hat": [1.0, 0.0]}}, "emitter.mu_hat"),
    ],
)
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError) as info:
        config_from_document(doc)
    assert info.value.field == field


# ---------------------------------------------------------------- efficiency


def test_efficiency_command(tmp_path, cfg_file, capsys):
    out = tmp_path / "run"
    assert main(["efficiency", "--config", str(cfg_file), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "chi = 10.2" in text and "E0" in text and "P" in text
    data = json.loads((out / "efficiency.json").read_text())
    assert data["chi"] == pytest.approx(10.21, abs=0.01)
    m = manifest(out)
    assert sorted(m["outputs"]) == ["config.toml", "efficiency.json"]
    assert m["config_hash"] == load_config(cfg_file).config_hash()
    assert m["code_version"] and m["started"] and m["finished"]
    assert load_config(out / "config.toml").config_hash() == m["config_hash"]


def test_missing_field_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(BASE.replace("T = 361.0", ""))
    assert main(["efficiency", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "bath.T" in capsys.readouterr().err


def test_parse_error_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(BASE.replace("T = 361.0", "T = = 361"))
    assert main(["efficiency", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "line" in capsys.readouterr().err


def test_zero_pump_exit_code(tmp_path, capsys):
    path = tmp_path / "nopump.toml"
    path.write_text(BASE.replace("gamma_in_rel = 1e-3", "gamma_in_rel = 0.0"))
    assert main(["efficiency", "--config", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "undefined" in capsys.readouterr().err


def test_singular_geometry_exit_code(tmp_path):
    path = tmp_path / "close.toml"
    path.write_text(BASE.replace("d = 1.03e-6", "d = 1e-12"))
    assert main(["efficiency", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


# ---------------------------------------------------------------- other commands


def test_sweep_command(tmp_path, cfg_file):
    path = tmp_path / "sweep.toml"
    path.write_text(
        BASE
        + """
[sweep]
outputs = ["chi", "delta"]

[[sweep.axis]]
name = "d"
min = 0.5e-6
max = 2e-6
num = 4

[[sweep.axis]]
name = "T"
values = [300.0, 361.0]
"""
    )
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert len(rows) == 8
    assert {"d_um", "T_K", "chi", "dQloc_2/P"} <= set(rows[0])
    m = manifest(out)
    assert "sweep.csv" in m["outputs"] and m["extra"]["failed_points"] == 0


def test_sweep_without_axes_is_config_error(tmp_path, cfg_file):
    assert main(["sweep", "--config", str(cfg_file), "--out", str(tmp_path / "o")]) == 2


def test_dynamics_command(tmp_path):
    path = tmp_path / "dyn.toml"
    path.write_text(BASE + "\n[dynamics]\nt_min = 1e-2\nt_max = 1e2\nper_decade = 2\n")
    out = tmp_path / "dyn"
    assert main(["dynamics", "--config", str(path), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "trajectory.csv").open()))
    assert len(rows) == 10
    assert {"t", "p_p", "p_e", "chi", "Qhop_2e", "Qloc_p_0"} <= set(rows[0])
    assert "trajectory.csv" in manifest(out)["outputs"]


def test_ga_command(tmp_path, capsys):
    path = tmp_path / "ga.toml"
    path.write_text(
        BASE.replace("n_atoms = 4", "n_atoms = 5").replace("d = 1.03e-6", "")
        + "\n[ga]\npopulation_size = 40\nelite_window = 5\nmax_generations = 3\n"
    )
    out = tmp_path / "ga"
    assert main(["ga", "--config", str(path), "--out", str(out), "--seed", "7", "--tolerance", "0.05"]) == 0
    m = manifest(out)
    assert m["seed"] == 7 and m["extra"]["ga"]["convergence_tol"] == 0.05
    assert {"ga_log.jsonl", "ga_report.json", "config.toml"} <= set(m["outputs"])
    log = [json.loads(l) for l in (out / "ga_log.jsonl").read_text().splitlines()]
    assert log[0]["generation"] == 0
    report = json.loads((out / "ga_report.json").read_text())
    assert set(report["table_row"]) >= {"N", "d4_um", "d5_um", "chi"}
    assert "N=5" in capsys.readouterr().out


def test_bad_ga_section_is_config_error(tmp_path):
    path = tmp_path / "ga.toml"
    path.write_text(BASE.replace("n_atoms = 4", "n_atoms = 5") + "\n[ga]\nmutation_rate = 1.5\n")
    assert main(["ga", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_figure_command(tmp_path):
    out = tmp_path / "fig"
    assert main(["figure", "fig2", "--quick", "--out", str(out)]) == 0
    for T in (10, 300):
        rows = list(csv.reader((out / f"fig2_T{T}.csv").open()))
        assert rows[0] == ["d_um", "chi", "error"]
        assert len(rows) > 5
    assert {"fig2_T10.csv", "fig2_T300.csv"} <= set(manifest(out)["outputs"])


def test_table_check_command(tmp_path, capsys):
    out = tmp_path / "t1"
    assert main(["figure", "table1-check", "--quick", "--out", str(out)]) == 0
    assert "deviation" in capsys.readouterr().out
    rows = list(csv.DictReader((out / "table1_check.csv").open()))
    assert abs(float(rows[0]["rel_deviation"])) < 1e-2


def test_unknown_figure(tmp_path):
    assert main(["figure", "fig99", "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path, cfg_file):
    proc = subprocess.run(
        [sys.executable, "-m", "atomchain", "efficiency", "--config", str(cfg_file), "--out", str(tmp_path / "m")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "chi" in proc.stdout
