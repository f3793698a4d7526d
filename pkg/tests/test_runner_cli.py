import csv
import subprocess
import sys

import numpy as np
import pytest

from kinchemo import parse_config, run_scenario
from kinchemo.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from kinchemo.runner import read_table

from conftest import scenario_text


def reduced(name, *subs):
    """A shipped scenario on a coarser y-grid, with ``(old, new)`` text substitutions."""
    text = scenario_text(name).replace("ny = [33, 32]", "ny = [17, 16]")
    for old, new in subs:
        assert old in text, old
        text = text.replace(old, new, 1)
    return text


def small_standard(T=2.5, *subs):
    return reduced("standard", ("nx = 320", "nx = 160"), ("T = 10.0", f"T = {T}"),
                   ("snapshot_every = 2.5", "snapshot_every = 1.25"), ("times = [1.0, 2.0, 5.0]", "times = []"),
                   *subs)


def ledger_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


@pytest.fixture(scope="module")
def standard_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("std")
    cfg = parse_config(small_standard())
    summary, res = run_scenario(cfg, out)
    return cfg, summary, res, out


def test_zero_horizon_writes_one_row(tmp_path):
    cfg = parse_config(small_standard(0.0))
    summary, res = run_scenario(cfg, tmp_path)
    assert summary.steps == 0 and len(res["moments"]) == 1
    assert read_table(tmp_path / "moments.csv")["t"].tolist() == [0.0]


def test_kinetic_outputs(standard_run):
    cfg, summary, res, out = standard_run
    for name in ("moments.csv", "series.csv", "ledger.csv", "ledger_negative_control.csv", "summary.json"):
        assert (out / name).is_file(), name
    assert len(list(out.glob("field_t*.bin"))) >= 2
    assert len(list(out.glob("signal_t*.csv"))) >= 2
    for name in ("moments.csv", "ledger.csv", "series.csv"):
        assert f"config_hash={cfg.config_hash}" in (out / name).read_text().splitlines()[1]
    mom = read_table(out / "moments.csv")
    assert np.allclose(mom["t"], np.arange(0, 2.51, 0.5))
    assert np.max(np.abs(mom["mass"] - mom["mass"][0])) < 1e-12
    assert summary.violation_count == 0
    assert summary.extra["clipped_mass"] < 1e-12
    assert not summary.extra["wrap_contact"]
    assert 0 < summary.extra["support_extent_max"] < 0.5 * cfg.model.L


def test_bounds_command_reproduces_ledger(standard_run, tmp_path, capsys):
    cfg, summary, res, out = standard_run
    path = tmp_path / "small.cfg"
    path.write_text(small_standard())
    code = main(["bounds", str(path), "--series", str(out / "series.csv"), "--out", str(tmp_path / "b")])
    assert code == EXIT_OK
    assert f"violations={summary.violation_count}" in capsys.readouterr().out
    again = ledger_rows(tmp_path / "b" / "ledger.csv")
    first = ledger_rows(out / "ledger.csv")
    assert [r["inequality"] for r in again] == [r["inequality"] for r in first]
    for key in ("t", "measured", "bound"):
        assert np.allclose([float(r[key]) for r in again], [float(r[key]) for r in first], rtol=1e-12)


def test_agent_mode_conserves_count(tmp_path):
    text = reduced("two_way", ("n_agents = 20000", "n_agents = 2000"), ("T = 5.0", "T = 1.0"),
                   ("snapshot_every = 2.5", "snapshot_every = 0.5"))
    summary, res = run_scenario(parse_config(text), tmp_path)
    assert summary.extra["agent_count_conserved"]
    assert res["ensemble"].size == 2000
    rows = read_table(tmp_path / "agents.csv")
    assert np.all(rows["count"] == 2000)
    assert np.allclose(rows["mass"], 1.0, rtol=1e-14)
    assert (tmp_path / "trajectories.csv").is_file()


def test_parabolic_tracks_elliptic_for_fast_diffusion():
    base = reduced("parabolic", ("nx = 320", "nx = 160"))
    par = run_scenario(parse_config(base))[1]
    ell_text = base.replace('signal_mode = "parabolic"', 'signal_mode = "elliptic"')
    ell_text = ell_text.replace('initial = { kind = "elliptic" }', "")
    summary, ell = run_scenario(parse_config(ell_text))
    assert summary.violation_count == 0
    for (t, na, Sa), (_, nb, Sb) in zip(par["fields"], ell["fields"]):
        assert np.abs(Sa - Sb).max() <= 0.02 * np.abs(Sb).max(), t
        assert np.abs(na - nb).sum() <= 0.02 * np.abs(nb).sum(), t


# -- command line ----------------------------------------------------------------------------

def write_cfg(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", write_cfg(tmp_path, small_standard())]) == EXIT_OK
    assert "corollary2" in capsys.readouterr().out


def test_cli_config_error(tmp_path, capsys):
    bad = small_standard().replace("k0 = [1.0]", "k0 = [-1.0]")
    assert main(["run", write_cfg(tmp_path, bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "POSITIVITY" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_cli_bad_worker_env(tmp_path, monkeypatch):
    monkeypatch.setenv("KINCHEMO_WORKERS", "zero")
    assert main(["validate", write_cfg(tmp_path, small_standard())]) == EXIT_CONFIG


def test_cli_runtime_error(tmp_path, capsys):
    # a grid box too small for the internal state: mass leaves it and the run aborts
    text = small_standard().replace("y_box = [[-1.0, 1.0], [-0.1, 1.0]]", "y_box = [[-0.15, 0.15], [0.25, 0.65]]")
    assert main(["run", write_cfg(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "grid" in capsys.readouterr().err


def test_cli_run(tmp_path, capsys):
    text = small_standard(0.5)
    assert main(["run", write_cfg(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "violations=0" in capsys.readouterr().out
    assert (tmp_path / "o" / "moments.csv").is_file()


def test_bounds_needs_series(tmp_path):
    assert main(["bounds", write_cfg(tmp_path, small_standard())]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kinchemo.cli", "validate", write_cfg(tmp_path, small_standard())],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_OK and "regimes:" in proc.stdout
