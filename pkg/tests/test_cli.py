import json

import pytest

from so3sync.cli import EXIT_CERTIFICATE, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, main

TINY = """\
name: tiny
controller: {controller}
graph:
  agents: 3
  edges: [[1, 2], [2, 3]]
potential:
  a: {{eigenvalues: {eigs}}}
{extra}
integration: {{t_end: 2.0}}
"""


def _write(tmp_path, controller="hybrid", eigs="[5.0, 8.57, 12.0]", extra=""):
    p = tmp_path / "cfg.yaml"
    p.write_text(TINY.format(controller=controller, eigs=eigs, extra=extra))
    return str(p)


def test_simulate_converges(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["simulate", "--config", "paper_fig3_hybrid", "--t-end", "12", "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] and summary["jumps"] == 6 and summary["certificates"] == "ok"
    header = (out / "timeseries.csv").read_text().splitlines()[0]
    assert header.startswith("t,j,dist_sq_edge_1")
    assert "converged=True" in capsys.readouterr().out


def test_simulate_stuck_reports_equilibrium(capsys):
    code = main(["simulate", "--config", "paper_fig3_continuous", "--t-end", "0.5"])
    assert code == EXIT_NOT_CONVERGED
    assert "undesired equilibrium" in capsys.readouterr().out


def test_simulate_from_rest_at_target(tmp_path):
    assert main(["simulate", "--config", _write(tmp_path)]) == EXIT_OK


def test_bad_config_exits_1(tmp_path, capsys):
    path = _write(tmp_path, extra="  delta: -1.0")
    assert main(["simulate", "--config", path]) == EXIT_CONFIG
    assert "potential.delta" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_check_params_reference(tmp_path, capsys):
    assert main(["check-params", "--config", "paper_fig3_hybrid", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "Delta* = 4.999" in text and "verdict: pass" in text
    rep = json.loads((tmp_path / "check_params.json").read_text())
    assert rep["synthesis_case"] == 2 and len(rep["critical_points"]) == 4


def test_check_params_infeasible_gamma(tmp_path):
    path = _write(tmp_path, extra="  gamma: 3.0\n  u: [0.0, 0.6455, 0.7638]\n  delta: 0.3")
    assert main(["check-params", "--config", path]) == EXIT_NOT_CONVERGED


def test_check_params_repeated_eigenvalue(tmp_path):
    path = _write(tmp_path, eigs="[1.0, 1.0, 2.0]")
    assert main(["check-params", "--config", path]) == EXIT_OK


def test_montecarlo_zero_trials(tmp_path, capsys):
    assert main(["montecarlo", "--config", "paper_fig3_hybrid", "--trials", "0",
                 "--out", str(tmp_path)]) == EXIT_OK
    d = json.loads((tmp_path / "montecarlo.json").read_text())
    assert d["trials"] == 0 and d["converged_fraction"] == 1.0
    assert main(["montecarlo", "--config", "paper_fig3_hybrid", "--trials", "-1"]) == EXIT_CONFIG


def test_montecarlo_small_batch(tmp_path):
    assert main(["montecarlo", "--config", _write(tmp_path), "--trials", "2"]) == EXIT_OK


def test_gradcheck_pass_and_flip(capsys):
    assert main(["gradcheck", "--config", "paper_fig3_hybrid", "--points", "10"]) == EXIT_OK
    assert "pass" in capsys.readouterr().out
    assert main(["gradcheck", "--config", "paper_fig3_hybrid", "--points", "3",
                 "--flip-sign"]) == EXIT_CERTIFICATE


def test_usage_errors():
    with pytest.raises(SystemExit):
        main([])
    with pytest.raises(SystemExit):
        main(["simulate"])
