import json

import pytest
from click.testing import CliRunner

from wallkf.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def synthetic_config(tmp_path, horizon=40, n_cells=12, M=6):
    cfg = {
        "method": "enmkf",
        "ensemble_size": M,
        "seed": 3,
        "wall": {"n_cells": n_cells},
        "data": {"synthetic": {
            "truth": {"R": 0.3106, "rhoC": 3.2e5},
            "horizon_min": horizon,
            "T_int": {"kind": "sinusoid", "mean": 25.0, "amplitude": 1.5, "period_min": 1440},
            "T_ext": {"kind": "sinusoid", "mean": 10.0, "amplitude": 4.0, "period_min": 1440, "phase": 1.0},
            "seed": 5,
            "wall": {"n_cells": n_cells},
        }},
        "output_dir": "out",
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


def test_filter_subcommand_writes_outputs(runner, tmp_path):
    cfg_path = synthetic_config(tmp_path)
    result = runner.invoke(main, ["filter", "--config", str(cfg_path)])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    assert (out / "diagnostics.csv").exists()
    assert (out / "summary.json").exists()
    assert (out / "parameters.png").exists()
    assert (out / "fluxes.png").exists()
    lines = (out / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == "t_min,R_mean,R_std,rhoC_mean,rhoC_std,Fint_mean,Fext_mean,Fint_var,Fext_var"
    assert len(lines) == 41


def test_filter_no_plots_skips_figures(runner, tmp_path):
    cfg_path = synthetic_config(tmp_path)
    result = runner.invoke(main, ["filter", "--config", str(cfg_path), "--no-plots",
                                  "--out", str(tmp_path / "bare")])
    assert result.exit_code == 0, result.output
    names = sorted(p.name for p in (tmp_path / "bare").iterdir())
    assert names == ["diagnostics.csv", "summary.json"]


def test_filter_flag_overrides_are_echoed(runner, tmp_path):
    cfg_path = synthetic_config(tmp_path)
    result = runner.invoke(main, ["filter", "--config", str(cfg_path), "--method", "enkf",
                                  "--ensemble-size", "4", "--seed", "9", "--no-plots"])
    assert result.exit_code == 0, result.output
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["config"]["method"] == "enkf"
    assert summary["config"]["ensemble_size"] == 4
    assert summary["config"]["seed"] == 9


def test_synth_subcommand_writes_campaign_and_truth(runner, tmp_path):
    cfg_path = synthetic_config(tmp_path)
    out_csv = tmp_path / "campaign.csv"
    result = runner.invoke(main, ["synth", "--config", str(cfg_path), "--out", str(out_csv)])
    assert result.exit_code == 0, result.output
    assert out_csv.exists()
    assert (tmp_path / "campaign_truth.csv").exists()
    assert (tmp_path / "campaign.png").exists()
    assert len(out_csv.read_text().splitlines()) == 42  # header + horizon + initial row


def test_filter_runs_on_csv_data(runner, tmp_path):
    cfg_path = synthetic_config(tmp_path)
    out_csv = tmp_path / "campaign.csv"
    runner.invoke(main, ["synth", "--config", str(cfg_path), "--out", str(out_csv), "--no-plots"])
    file_cfg = {
        "method": "enmkf", "ensemble_size": 6, "seed": 1,
        "wall": {"n_cells": 12},
        "data": {"csv": "campaign.csv"},
        "output_dir": "csv_out",
    }
    cfg2 = tmp_path / "run2.json"
    cfg2.write_text(json.dumps(file_cfg))
    result = runner.invoke(main, ["filter", "--config", str(cfg2), "--no-plots"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "csv_out" / "diagnostics.csv").exists()


def test_stopcheck_subcommand(runner, tmp_path):
    cfg_path = synthetic_config(tmp_path, horizon=60)
    runner.invoke(main, ["filter", "--config", str(cfg_path), "--no-plots"])
    diag = tmp_path / "out" / "diagnostics.csv"
    result = runner.invoke(main, ["stopcheck", "--diagnostics", str(diag), "--window", "20"])
    assert result.exit_code == 0, result.output
    assert "stopping rule" in result.output


def test_converge_subcommand(runner, tmp_path):
    cfg_path = synthetic_config(tmp_path, horizon=30)
    result = runner.invoke(main, ["converge", "--config", str(cfg_path), "--ensemble-sizes", "4,6",
                                  "--t-eval", "30", "--replicates", "1", "--no-plots"])
    assert result.exit_code == 0, result.output
    table = (tmp_path / "out" / "convergence.csv").read_text().splitlines()
    assert table[0] == "method,M,seed,R_mean,R_std,rhoC_mean,rhoC_std"
    assert len(table) == 5  # 2 methods x 2 sizes
    assert (tmp_path / "out" / "convergence_aggregate.csv").exists()


def test_compare_subcommand(runner, tmp_path):
    cfg_path = synthetic_config(tmp_path, horizon=30)
    result = runner.invoke(main, ["compare", "--config", str(cfg_path), "--seeds", "2", "--no-plots"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "comparison.csv").exists()
    summary = json.loads((tmp_path / "out" / "comparison.json").read_text())
    assert "enmkf" in summary and "enkf" in summary


def test_missing_config_exits_2(runner, tmp_path):
    result = runner.invoke(main, ["filter", "--config", str(tmp_path / "nope.json")])
    assert result.exit_code == 2


def test_invalid_config_exits_2(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"method": "bogus"}))
    result = runner.invoke(main, ["filter", "--config", str(bad)])
    assert result.exit_code == 2


def test_bad_data_exits_3(runner, tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("t_min,T_int,T_ext,F_int,F_ext\n0,1,2,3,4\n2,1,2,3,4\n")
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"data": {"csv": "bad.csv"}, "output_dir": "out",
                               "wall": {"n_cells": 12}}))
    result = runner.invoke(main, ["filter", "--config", str(cfg), "--no-plots"])
    assert result.exit_code == 3


def test_numerical_failure_exits_4(runner, tmp_path):
    # coarse grid destabilizes the resistance-scaled update within the horizon
    cfg_path = synthetic_config(tmp_path, horizon=400, n_cells=6, M=40)
    result = runner.invoke(main, ["filter", "--config", str(cfg_path), "--seed", "4", "--no-plots"])
    assert result.exit_code == 4
    assert "aborted at step" in result.output


def test_stopcheck_bad_file_exits_3(runner, tmp_path):
    bad = tmp_path / "diag.csv"
    bad.write_text("nope\n")
    result = runner.invoke(main, ["stopcheck", "--diagnostics", str(bad)])
    assert result.exit_code == 3
