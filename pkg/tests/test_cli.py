import json

import click
import pytest
from click.testing import CliRunner

from cartan_kill import __version__
from cartan_kill.cli import cli
from cartan_kill.commands.common import EXIT_INPUT, EXIT_NUMERICAL, handle_errors
from cartan_kill.exceptions import LogConvergenceError


def error_payload(stderr: str) -> dict:
    """The JSON error document that ends stderr, after any log lines"""
    lines = stderr.splitlines()
    start = max(i for i, line in enumerate(lines) if line == "{")
    return json.loads("\n".join(lines[start:]))


@pytest.fixture
def runner():
    return CliRunner()


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout


def test_bch_order(runner):
    """--order prints the bracket polynomials"""
    result = runner.invoke(cli, ["bch", "--order", "3"])
    assert result.exit_code == 0, result.stderr
    assert result.stdout.splitlines() == [
        "a_1 = X + Y",
        "a_2 = [X, Y]",
        "a_3 = 1/2*[X, [X, Y]] + 1/2*[[X, Y], Y]",
    ]


def test_bch_usage_errors(runner):
    assert runner.invoke(cli, ["bch", "--order", "0"]).exit_code == EXIT_INPUT
    assert runner.invoke(cli, ["bch"]).exit_code == EXIT_INPUT


def test_bch_verify_is_deterministic(runner):
    """Same seed, same report"""
    args = ["bch", "--verify", "-g", "klein:heisenberg", "--kmax", "2", "--seed", "3"]
    first = runner.invoke(cli, args)
    second = runner.invoke(cli, args)
    assert first.exit_code == 0, first.stderr
    assert first.stdout == second.stdout
    payload = json.loads(first.stdout)
    assert payload["pass"] is True
    assert payload["seed"] == 3
    assert [t["order"] for t in payload["result"]["terms"]] == [1, 2]


def test_verify_list(runner):
    result = runner.invoke(cli, ["verify", "--list"])
    assert result.exit_code == 0
    lines = result.stdout.splitlines()
    assert any(line.startswith("liealg.jacobi") for line in lines)
    assert any("curvature.gauss" in line and line.endswith("(metric)") for line in lines)


def test_verify_selected_checks(runner):
    """Metric-only checks are skipped on Klein charts"""
    result = runner.invoke(
        cli, ["verify", "-g", "klein:so3", "-c", "liealg.jacobi", "-c", "bch.symbolic", "-c", "curvature.torsion_free"]
    )
    assert result.exit_code == 0, result.stderr
    payload = json.loads(result.stdout)
    assert payload["pass"] is True
    checks = {c["name"]: c for c in payload["result"]["checks"]}
    assert "skipped" in checks["curvature.torsion_free"]["details"]


def test_verify_unknown_check(runner):
    result = runner.invoke(cli, ["verify", "-g", "flat2", "-c", "no.such.check"])
    assert result.exit_code == EXIT_INPUT
    assert "no.such.check" in error_payload(result.stderr)["error"]


def test_killing_on_klein_chart(runner):
    """A Maurer-Cartan chart is homogeneous"""
    result = runner.invoke(cli, ["killing", "-g", "klein:heisenberg", "--m", "1", "--no-verify"])
    assert result.exit_code == 0, result.stderr
    payload = json.loads(result.stdout)
    report = payload["result"]["points"][0]
    assert report["k"] == 3
    assert report["checks"] == []
    assert payload["command"] == "killing"


def test_killing_on_flat_plane_with_verification(runner):
    result = runner.invoke(
        cli, ["killing", "-g", "flat2", "-p", "0.2,0.1", "--m", "1", "--samples", "1", "--radius", "0.1"]
    )
    assert result.exit_code == 0, result.stderr
    report = json.loads(result.stdout)["result"]["points"][0]
    assert report["k"] == 3
    assert len(report["checks"]) == 3
    assert report["passed"] is True


def test_killing_bad_inputs(runner):
    """Malformed points and unknown geometries are input errors"""
    result = runner.invoke(cli, ["killing", "-g", "sphere2", "-p", "0.1,abc"])
    assert result.exit_code == EXIT_INPUT
    result = runner.invoke(cli, ["killing", "-g", "torus"])
    assert result.exit_code == EXIT_INPUT
    assert error_payload(result.stderr)["details"]["type"] == "GeometryError"
    result = runner.invoke(cli, ["killing", "-g", "sphere2", "-p", "0.1"])
    assert result.exit_code == EXIT_INPUT


def test_corrupted_metric_file(runner, tmp_path):
    """Parse errors report their position"""
    path = tmp_path / "metric.json"
    path.write_text(json.dumps({"n": 2, "g": [["1", "0"], ["0", "1 +"]], "domain": [[-1, 1], [-1, 1]]}), encoding="utf-8")
    result = runner.invoke(cli, ["killing", "--metric-file", str(path)])
    assert result.exit_code == EXIT_INPUT
    error = error_payload(result.stderr)
    assert "position" in error["details"]
    assert error["details"]["type"] == "MetricParseError"


def test_strata_files(runner, tmp_path):
    """--out writes both the JSON report and the table"""
    out = tmp_path / "scan" / "strata"
    result = runner.invoke(
        cli,
        ["strata", "-g", "sphere2", "--grid=-0.2:0.2:2", "--grid=-0.2:0.2:2", "--m", "1", "--out", str(out)],
    )
    assert result.exit_code == 0, result.stderr
    assert out.with_suffix(".csv").exists()
    payload = json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))
    assert payload["metadata"]["tool"] == "cartan-kill"
    assert len(payload["report"]["samples"]) == 4
    header, *rows = out.with_suffix(".csv").read_text(encoding="utf-8").splitlines()
    assert header.startswith("x1,x2,k_1,k,m_b"), header
    assert len(rows) == 4


def test_strata_csv_to_stdout(runner):
    """--format csv without --out prints the table"""
    result = runner.invoke(
        cli, ["strata", "-g", "sphere2", "--grid=-0.2:0.2:2", "--grid=-0.2:0.2:2", "--m", "1", "--format", "csv"]
    )
    assert result.exit_code == 0, result.stderr
    lines = result.stdout.splitlines()
    assert lines[0] == "x1,x2,k_1,k,m_b,regular,component,error"
    assert len(lines) == 5
    assert all(line.split(",")[3] == "3" for line in lines[1:]), lines


def test_strata_needs_grid(runner):
    assert runner.invoke(cli, ["strata", "-g", "sphere2"]).exit_code == EXIT_INPUT


def test_numerical_errors_exit_three(runner):
    @click.command()
    @handle_errors
    def failing():
        raise LogConvergenceError("Shooting did not converge", {"iterations": 50})

    result = runner.invoke(failing)
    assert result.exit_code == EXIT_NUMERICAL
    error = error_payload(result.stderr)
    assert error["details"] == {"type": "LogConvergenceError", "iterations": 50}
