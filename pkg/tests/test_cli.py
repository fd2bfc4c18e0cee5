import json

import pytest
from click.testing import CliRunner

from lyapcert.cli import main


@pytest.fixture()
def quick_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "system": {"builtin": "paper_example"},
        "domain": {"c1": 0.49, "c2": 1.0},
        "rate_a": 2.0,
        "eta": 0.6,
        "grid": {"resolution": 401, "refinement": 2},
        "integrator": {"t_max": 5.0},
        "initial_conditions": {"count": 2, "level": 0.97, "seed": 42},
    }))
    return path


def test_help_lists_modes():
    result = CliRunner().invoke(main, ["--help"])
    assert result.exit_code == 0
    for mode in ("certify", "guas", "simulate", "audit", "all", "serve"):
        assert mode in result.output


def test_certify_exit_zero(quick_config, tmp_path):
    result = CliRunner().invoke(
        main, ["certify", "--config", str(quick_config), "--out", str(tmp_path)]
    )
    assert result.exit_code == 0
    assert "verdict: pass" in result.output
    assert (tmp_path / "report_certify.json").exists()


def test_quiet_suppresses_output(quick_config, tmp_path):
    result = CliRunner().invoke(
        main,
        ["certify", "--config", str(quick_config), "--out", str(tmp_path), "--quiet"],
    )
    assert result.exit_code == 0
    assert result.output == ""


def test_bad_config_exit_two(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{]")
    result = CliRunner().invoke(main, ["certify", "--config", str(bad), "--quiet"])
    assert result.exit_code == 2


def test_seed_override(quick_config, tmp_path):
    result = CliRunner().invoke(
        main,
        ["certify", "--config", str(quick_config), "--out", str(tmp_path),
         "--seed", "7", "--quiet"],
    )
    assert result.exit_code == 0
