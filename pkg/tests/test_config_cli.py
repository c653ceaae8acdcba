"""Tests for INI parsing and the command-line workflow."""

import os

import numpy as np
import pandas as pd
import pytest

from revcast import cli, data, dlm, evaluation, pipeline
from revcast.config import RunConfig, load_config, parse_config
from revcast.errors import ConfigError


# ---------------------------------------------------------------------------
# Config parsing


def test_empty_config_is_all_defaults():
    config = parse_config("")
    assert config == RunConfig()
    assert config.panel_path() == os.path.join("out", "panel.csv")
    assert config.resolved_study_path() == os.path.join("out", "study.csv")


def test_full_config_round_trip():
    config = parse_config("""
[run]
output_dir = work
input = data/panel.csv
study = work/records.csv
jobs = 4

[synth]
n_lsg = 3
n_category = 5
n_weeks = 120
seed = 9
noise_sds = 0.1, 0.2, 0.3
holiday_weeks = 50, 102
holiday_multipliers = 1.8
cross_effects = 0:1:0.02, 2:3:-0.01
effect_ar_phi = 0.99
category_level_range = 2, 6

[model]
horizon = 8
delta_trend = 0.97
beta = 0.98

[study]
variants = baseline, ms
seed = 3
mc_samples = 2000
tune = yes
tune_grid = 0.98, 1.0
origin_start = 60
origin_end = 100
extra_covariates = C002<-C001:tpr_pct

[holidays]
weeks = 50, 102
treat_missing = true
mask = false

[preprocess]
enabled = no
negligible_threshold = 0.4
jitter_sd = 0.05
seed = 2

[evaluate]
horizon = 6
baseline = ms
metric = masked_mape

[crosscat]
variant = ms_net
horizon = 4
covariate = adfront_pct
top_n = 3

[fit]
variant = net
lsg_ids = L01, L02
category_ids = C001
""")
    assert config.output_dir == "work"
    assert config.input_path == "data/panel.csv"
    assert config.study_path == "work/records.csv"
    assert config.jobs == 4
    assert config.panel_path() == "data/panel.csv"
    assert config.resolved_study_path() == "work/records.csv"

    synth = config.synth
    assert (synth.n_lsg, synth.n_category, synth.n_weeks, synth.seed) == (3, 5, 120, 9)
    assert synth.noise_sds == (0.1, 0.2, 0.3)
    assert synth.holiday_weeks == (50, 102)
    assert synth.holiday_multipliers == 1.8
    assert synth.cross_effects == ((0, 1, 0.02), (2, 3, -0.01))
    assert synth.effect_ar_phi == 0.99
    assert synth.category_level_range == (2.0, 6.0)

    study = config.study
    assert study.variants == ("BASELINE", "MS")
    assert study.horizon == 8
    assert (study.delta_trend, study.beta) == (0.97, 0.98)
    assert (study.seed, study.mc_samples) == (3, 2000)
    assert study.tune and study.tune_grid == (0.98, 1.0)
    assert (study.origin_start, study.origin_end) == (60, 100)
    assert study.extra_covariates == (("C002", "C001", "tpr_pct"),)
    assert study.holiday_weeks == (50, 102)
    assert study.holiday_treat_missing is True

    assert config.holiday_mask is False
    assert config.preprocess_enabled is False
    assert (config.preprocess_threshold, config.preprocess_jitter_sd,
            config.preprocess_seed) == (0.4, 0.05, 2)
    assert (config.evaluate_horizon, config.evaluate_baseline,
            config.evaluate_metric) == (6, "MS", "masked_mape")
    assert (config.crosscat_variant, config.crosscat_horizon,
            config.crosscat_covariate, config.crosscat_top_n) == (
                "MS_NET", 4, "adfront_pct", 3)
    assert config.fit_variant == "NET"
    assert config.fit_lsg_ids == ("L01", "L02")
    assert config.fit_category_ids == ("C001",)


def test_unknown_sections_and_keys_are_rejected():
    with pytest.raises(ConfigError, match=r"unknown section \[wat\]"):
        parse_config("[wat]\nx = 1\n")
    with pytest.raises(ConfigError, match=r"\[run\] unknown key 'wat'"):
        parse_config("[run]\nwat = 1\n")


def test_problems_accumulate_into_one_error():
    with pytest.raises(ConfigError) as err:
        parse_config("""
[run]
jobs = 0
[evaluate]
metric = rmse
[crosscat]
covariate = revenue
""")
    msg = str(err.value)
    assert "jobs must be >= 1" in msg
    assert "[evaluate] metric" in msg
    assert "[crosscat] covariate" in msg


def test_empty_variant_list_is_a_config_error():
    with pytest.raises(ConfigError, match="must not be empty"):
        parse_config("[study]\nvariants =\n")


def test_malformed_values_are_reported_in_place():
    with pytest.raises(ConfigError, match=r"\[study\] extra_covariates"):
        parse_config("[study]\nextra_covariates = C002:tpr_pct\n")
    with pytest.raises(ConfigError, match=r"\[synth\] cross_effects"):
        parse_config("[synth]\ncross_effects = 0-1-0.02\n")
    with pytest.raises(ConfigError, match=r"\[study\] variants"):
        parse_config("[study]\nvariants = WAT\n")
    with pytest.raises(ConfigError, match=r"\[holidays\] treat_missing"):
        parse_config("[holidays]\ntreat_missing = sometimes\n")
    with pytest.raises(ConfigError, match=r"\[synth\] category_level_range"):
        parse_config("[synth]\ncategory_level_range = 1, 2, 3\n")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config file"):
        load_config(tmp_path / "nope.ini")


# ---------------------------------------------------------------------------
# Command-line workflow

SMOKE_INI = """
[run]
output_dir = {out}

[synth]
n_lsg = 2
n_category = 2
n_weeks = 110
seed = 11

[model]
horizon = 4

[study]
variants = baseline, ms_net
origin_start = 60
origin_end = 69

[fit]
variant = ms_net
"""


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    """One synth + forecast run shared by the workflow tests."""
    root = tmp_path_factory.mktemp("cli_smoke")
    out = root / "out"
    cfg_path = root / "run.ini"
    cfg_path.write_text(SMOKE_INI.format(out=out))
    config = load_config(cfg_path)
    synth_status, synth_files = cli.dispatch("synth", config)
    forecast_status, forecast_files = cli.dispatch("forecast", config)
    assert synth_status == 0 and forecast_status == 0
    return {"root": root, "out": out, "cfg_path": cfg_path, "config": config,
            "synth_files": synth_files, "forecast_files": forecast_files}


def test_synth_outputs_are_reparseable(smoke):
    panel_path, truth_path = smoke["synth_files"]
    panel = data.parse_panel(panel_path)
    assert panel.n_weeks == 110
    assert panel.lsg_ids == ("L01", "L02")
    truth = data.read_ground_truth(truth_path)
    assert {"quantity", "category_id"} <= set(truth.columns)


def test_forecast_output_is_reparseable(smoke):
    (study_path,) = smoke["forecast_files"]
    result = pipeline.StudyResult.read_csv(study_path)
    assert result.variants == ("BASELINE", "MS_NET")
    assert result.horizon == 4
    assert len(result.records) == 10 * 4 * 4 * 2


def test_fit_emits_model_trajectories(smoke):
    status, files = cli.dispatch("fit", smoke["config"])
    assert status == 0
    # 4 pairs + 2 aggregates + 4 price models
    assert len(files) == 10
    names = [os.path.basename(f) for f in files]
    assert sum("aggregate" in n for n in names) == 2
    assert sum("price" in n for n in names) == 4
    for f in files:
        traj = dlm.read_trajectory(f)
        assert traj["m"].shape[0] == 110


def test_evaluate_emits_accuracy_and_comparisons(smoke):
    status, files = cli.dispatch("evaluate", smoke["config"])
    assert status == 0
    names = {os.path.basename(f) for f in files}
    assert names == {"accuracy.csv",
                     "comparison_MS_NET_vs_BASELINE_mape.csv",
                     "comparison_MS_NET_vs_BASELINE_masked_mape.csv",
                     "comparison_summary.csv"}
    table = pd.read_csv(smoke["out"] / "accuracy.csv")
    assert set(table["variant"]) == {"BASELINE", "MS_NET"}
    assert set(table.columns) >= {"lsg_id", "category_id", "variant", "horizon",
                                  "mape", "masked_mape", "coverage90"}
    summary = pd.read_csv(smoke["out"] / "comparison_summary.csv")
    assert list(summary["metric"]) == ["mape", "masked_mape"]
    assert ((summary["fraction_improved"] >= 0)
            & (summary["fraction_improved"] <= 1)).all()


def test_crosscat_emits_both_matrices(smoke):
    status, files = cli.dispatch("crosscat", smoke["config"])
    assert status == 0
    names = [os.path.basename(f) for f in files]
    assert names == ["crosscat_errors.csv", "crosscat_revenue.csv"]
    for f in files:
        matrix = evaluation.read_crosscat_csv(f)
        assert list(matrix.index) == ["C001", "C002"]
        assert list(matrix.columns) == ["C001", "C002"]


def test_identical_runs_are_bytewise_identical(smoke, tmp_path):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(SMOKE_INI.format(out=tmp_path / "out"))
    config = load_config(cfg_path)
    assert cli.dispatch("synth", config)[0] == 0
    assert cli.dispatch("forecast", config)[0] == 0
    assert cli.dispatch("evaluate", config)[0] == 0
    for name in ("panel.csv", "ground_truth.csv", "study.csv", "accuracy.csv",
                 "comparison_summary.csv"):
        a = (smoke["out"] / name).read_bytes()
        b = (tmp_path / "out" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"


def test_jobs_do_not_change_the_study(smoke, tmp_path):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(SMOKE_INI.format(out=tmp_path / "out")
                        + "\n[run]\n".replace("[run]", "")  # keep INI valid
                        )
    config = load_config(cfg_path)
    assert cli.dispatch("synth", config)[0] == 0
    assert cli.main(["forecast", "-c", str(cfg_path), "--jobs", "3"]) == 0
    a = (smoke["out"] / "study.csv").read_bytes()
    b = (tmp_path / "out" / "study.csv").read_bytes()
    assert a == b


def test_dispatch_unknown_command(capsys):
    status, files = cli.dispatch("wat", RunConfig())
    assert (status, files) == (2, ())
    assert "unknown command" in capsys.readouterr().err


def test_missing_inputs_give_single_line_diagnostics(tmp_path, capsys):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(f"[run]\noutput_dir = {tmp_path / 'out'}\n")
    config = load_config(cfg_path)

    status, files = cli.dispatch("forecast", config)
    assert (status, files) == (2, ())
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and err.startswith("revcast: error: panel file not found")

    status, _ = cli.dispatch("evaluate", config)
    assert status == 2
    err = capsys.readouterr().err
    assert "study file not found" in err


def test_fit_rejects_unknown_series_ids(smoke, capsys):
    cfg_path = smoke["root"] / "bad_fit.ini"
    cfg_path.write_text(SMOKE_INI.format(out=smoke["out"])
                        + "lsg_ids = L99\n")
    status = cli.main(["fit", "-c", str(cfg_path)])
    assert status == 2
    assert "unknown LSG 'L99'" in capsys.readouterr().err


def test_crosscat_rejects_absent_variant(smoke, capsys):
    cfg_path = smoke["root"] / "bad_crosscat.ini"
    cfg_path.write_text(SMOKE_INI.format(out=smoke["out"])
                        + "\n[crosscat]\nvariant = net\n")
    status = cli.main(["crosscat", "-c", str(cfg_path)])
    assert status == 2
    assert "no records for variant 'NET'" in capsys.readouterr().err


def test_main_reports_config_errors(tmp_path, capsys):
    cfg_path = tmp_path / "bad.ini"
    cfg_path.write_text("[study]\nvariants =\n")
    assert cli.main(["synth", "-c", str(cfg_path)]) == 2
    assert "must not be empty" in capsys.readouterr().err

    assert cli.main(["synth", "-c", str(tmp_path / "missing.ini")]) == 2
    assert "cannot read config file" in capsys.readouterr().err


def test_main_rejects_bad_jobs_override(tmp_path, capsys):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text("")
    assert cli.main(["synth", "-c", str(cfg_path), "--jobs", "0"]) == 2
    assert "--jobs must be >= 1" in capsys.readouterr().err


def test_dispatch_surfaces_os_errors(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    config = parse_config(f"[run]\noutput_dir = {blocker}\n")
    status, files = cli.dispatch("synth", config)
    assert (status, files) == (2, ())
    assert "revcast: error:" in capsys.readouterr().err
