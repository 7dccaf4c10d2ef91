import json
import subprocess
import sys
from pathlib import Path

import pytest

from stefanlab.cli import main
from stefanlab.config import load_config
from stefanlab.pipeline import AnalysisOptions, run_theorem_experiment
from stefanlab.runio import load_run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_certify_hopf(tmp_path, capsys):
    code = main(["certify", "hopf", "--samples", "4096", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "kappa = 10^" in out and "verdict" in out and "pass" in out
    cert = json.loads((tmp_path / "certificates" / "hopf.json").read_text())
    assert cert["verdict"] == "pass"
    assert cert["constants"]["pieces"] == 1


def test_certify_w_needs_both_parameters(tmp_path, capsys):
    assert main(["certify", "w", "--C0", "1", "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_certify_w_one_dimension(tmp_path, capsys):
    code = main(["certify", "w", "--n", "1", "--K", "1", "--samples", "1024", "--out", str(tmp_path)])
    assert code == 0
    assert "printed inequality satisfiable: False" in capsys.readouterr().out


def test_missing_config_names_the_file(tmp_path, capsys):
    missing = tmp_path / "nope.cfg"
    assert main(["theorem", str(missing)]) == 2
    err = capsys.readouterr().err
    assert "nope.cfg" in err
    assert len(err.splitlines()) == 1


def test_bad_config_prints_the_schema(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[scenario]\nlam = banana\n")
    assert main(["simulate", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "lam" in err and "[scenario]" in err


def test_unknown_flag_is_a_usage_error(capsys):
    assert main(["theorem", "x.cfg", "--bogus"]) == 2
    assert "usage: stefanlab" in capsys.readouterr().err


def test_theorem_on_the_plane_writes_artifacts(tmp_path, capsys):
    code = main(["theorem", str(CONFIGS / "plane.json"), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "conclusion: pass" in out
    for name in ("report.json", "config.echo", "inputs.sha1", "field.csv", "front.csv", "dashboard.svg",
                 "overlay.svg"):
        assert (tmp_path / name).is_file(), name
    digest = (tmp_path / "inputs.sha1").read_text().strip()
    assert len(digest) == 40 and digest == load_config(CONFIGS / "plane.json").content_hash()
    assert "<svg" in (tmp_path / "dashboard.svg").read_text()


def test_simulate_then_analyze_matches_in_memory(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["simulate", str(CONFIGS / "plane.json"), "--out", str(run), "--quiet"]) == 0
    assert capsys.readouterr().out == ""
    assert main(["analyze", str(run), "--quiet"]) == 0
    on_disk = json.loads((run / "report.json").read_text())
    cfg, sol = load_run(run)
    direct = run_theorem_experiment(sol.scenario, AnalysisOptions.from_config(cfg), solution=sol).to_dict()
    for key in ("eps0", "hypothesis_pass", "conclusion_pass", "eta_table"):
        assert on_disk[key] == json.loads(json.dumps(direct[key])), key


def test_analyze_reports_broken_front_dumps(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["simulate", str(CONFIGS / "plane.json"), "--out", str(run), "--quiet"]) == 0
    front = run / "front.csv"
    lines = front.read_text().splitlines()
    front.write_text("\n".join(lines[:-3]) + "\n")
    assert main(["analyze", str(run)]) == 2
    assert "truncated" in capsys.readouterr().err
    lines[5] = "1,2"
    front.write_text("\n".join(lines) + "\n")
    assert main(["analyze", str(run)]) == 2
    assert "columns" in capsys.readouterr().err
    assert main(["analyze", str(tmp_path / "missing")]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "stefanlab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "certify" in res.stdout
