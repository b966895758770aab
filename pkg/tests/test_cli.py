"""Command-line behavior: exit codes, outputs, and re-run determinism."""

import json
import subprocess
import sys

import pytest
from oracles import BIN3_ALWAYS

from contregime.cli import main


def _write_config(tmp_path, name="cfg.json", **over):
    payload = {"spec": {"name": "BIN3"}, "n": 1500, "seed": 4}
    payload.update(over)
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


ALWAYS = {"variant": "point_mass", "value": 1.0}


def test_simulate_writes_a_cohort_and_reruns_byte_for_byte(tmp_path):
    cfg = _write_config(tmp_path, n=400)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
    for name in ("cohort.csv", "cohort_meta.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert main(["simulate", "--config", cfg, "--seed", "99", "--out", str(c)]) == 0
    assert (a / "cohort.csv").read_bytes() != (c / "cohort.csv").read_bytes()


def test_estimate_gcomp_exact_hits_the_enumerated_target(tmp_path, capsys):
    cfg = _write_config(tmp_path, regime=ALWAYS, estimator="gcomp")
    out = tmp_path / "est"
    assert main(["estimate", "--config", cfg, "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    on_disk = json.loads((out / "estimate.json").read_text())
    assert printed == on_disk
    assert on_disk["point"] == pytest.approx(BIN3_ALWAYS, abs=1e-12)
    assert set(on_disk) == {"point", "se", "n", "K", "diagnostics"}


def test_estimate_flags_override_the_config(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    out = tmp_path / "est"
    code = main([
        "estimate", "--config", cfg, "--out", str(out),
        "--estimator", "ipw", "--nuisance", "exact",
        "--regime", "point_mass:value=1.0", "--n", "3000",
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["n"] == 3000
    assert abs(payload["point"] - BIN3_ALWAYS) <= 4 * payload["se"]


def test_estimate_reads_a_cohort_back_from_csv(tmp_path, capsys):
    cfg = _write_config(tmp_path, regime=ALWAYS, estimator="ipw", n=1000)
    sim_dir = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(sim_dir)]) == 0
    capsys.readouterr()
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path / "x")]) == 0
    from_sim = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert main([
        "estimate", "--config", cfg, "--out", str(tmp_path / "y"),
        "--input", str(sim_dir / "cohort.csv"),
    ]) == 0
    from_csv = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert from_csv["point"] == pytest.approx(from_sim["point"], abs=1e-12)


def test_converge_writes_the_pinned_header(tmp_path):
    cfg = _write_config(tmp_path, regime=ALWAYS, n=2000, k_schedule=[3, 3])
    out = tmp_path / "conv"
    assert main(["converge", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "converge.csv").read_text().splitlines()
    assert lines[0] == "K,estimate,se,delta_prev"
    assert len(lines) == 3


def test_dr_grid_exit_code_tracks_the_pattern(tmp_path):
    good = _write_config(tmp_path, "good.json", regime=ALWAYS,
                         n=1000, replications=60, seed=20)
    assert main(["dr-grid", "--config", good, "--out", str(tmp_path / "g")]) == 0
    broken = _write_config(tmp_path, "broken.json", regime=ALWAYS,
                           n=500, replications=3, seed=22,
                           knobs=["transition_shift(0.0)", "transition_shift(0.0)"])
    assert main(["dr-grid", "--config", broken, "--out", str(tmp_path / "b")]) == 2
    assert (tmp_path / "b" / "grid_summary.json").exists()


def test_diagnose_exit_code_tracks_the_identities(tmp_path):
    clean = _write_config(tmp_path, "clean.json", regime=ALWAYS,
                          n=20000, seed=25)
    assert main(["diagnose", "--config", clean, "--out", str(tmp_path / "ok")]) == 0
    knobbed = _write_config(tmp_path, "knobbed.json", regime=ALWAYS, n=20000,
                            seed=25, nuisance="misspec:propensity_drop_covariate")
    assert main(["diagnose", "--config", knobbed, "--out", str(tmp_path / "bad")]) == 2


def test_errors_exit_one(tmp_path, capsys):
    assert main(["estimate", "--config", str(tmp_path / "missing.json")]) == 1
    assert "error:" in capsys.readouterr().err
    bad = _write_config(tmp_path, "bad.json", estimator="tmle")
    assert main(["estimate", "--config", bad]) == 1
    assert "estimator" in capsys.readouterr().err
    # positivity failures from deterministic regimes on continuous treatments
    cont = tmp_path / "cont.json"
    cont.write_text(json.dumps({
        "spec": {"name": "OU1", "fine_steps": 32}, "n": 200, "seed": 4,
        "decisions": 4, "regime": ALWAYS, "estimator": "ipw",
    }))
    assert main(["estimate", "--config", str(cont)]) == 1
    assert "no density" in capsys.readouterr().err


def test_argparse_paths(capsys):
    assert main(["--help"]) == 0
    capsys.readouterr()
    assert main(["frobnicate", "--config", "x"]) == 1
    assert main([]) == 1


def test_installed_entry_point():
    proc = subprocess.run([sys.executable, "-m", "contregime.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
    console = subprocess.run(["contregime", "--help"], capture_output=True, text=True)
    assert console.returncode == 0
