"""Command-line entry points.

Usage: revcast {synth,fit,forecast,evaluate,crosscat} -c CONFIG [--jobs N]

synth     generate a synthetic panel and its ground truth
fit       export posterior trajectories for one model variant
forecast  run the rolling-origin study and write its records
evaluate  summarize accuracy and pairwise variant comparisons
crosscat  correlate forecast errors and revenue with other
          categories' discounts

Data goes to CSV files under the configured output directory,
diagnostics go to stderr, and the exit status is 0 only on success.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np
import pandas as pd

from . import data as datamod
from . import dlm, evaluation, pipeline
from .config import RunConfig, load_config
from .errors import ConfigError, RevcastError

COMMANDS = ("synth", "fit", "forecast", "evaluate", "crosscat")


def _load_panel(config: RunConfig):
    path = config.panel_path()
    if not os.path.exists(path):
        raise ConfigError(
            f"panel file not found: {path} (set [run] input or run synth first)")
    panel = datamod.parse_panel(path)
    if config.preprocess_enabled:
        panel, _ = datamod.preprocess(
            panel, negligible_threshold=config.preprocess_threshold,
            jitter_sd=config.preprocess_jitter_sd, seed=config.preprocess_seed)
    return panel


def _load_study(config: RunConfig) -> pipeline.StudyResult:
    path = config.resolved_study_path()
    if not os.path.exists(path):
        raise ConfigError(f"study file not found: {path} (run forecast first)")
    return pipeline.StudyResult.read_csv(path)


def _cmd_synth(config: RunConfig) -> list:
    panel, truth = datamod.generate_synthetic(config.synth)
    panel_path = os.path.join(config.output_dir, "panel.csv")
    truth_path = os.path.join(config.output_dir, "ground_truth.csv")
    datamod.write_panel(panel, panel_path)
    datamod.write_ground_truth(truth, truth_path)
    return [panel_path, truth_path]


def _cmd_fit(config: RunConfig) -> list:
    panel = _load_panel(config)
    keys = None
    if config.fit_lsg_ids is not None or config.fit_category_ids is not None:
        lsgs = config.fit_lsg_ids or panel.lsg_ids
        cats = config.fit_category_ids or panel.category_ids
        for z in lsgs:
            if z not in panel.lsg_ids:
                raise ConfigError(f"[fit] lsg_ids: unknown LSG {z!r}")
        for c in cats:
            if c not in panel.category_ids:
                raise ConfigError(f"[fit] category_ids: unknown category {c!r}")
        keys = [pipeline.SeriesKey(z, c) for c in cats for z in lsgs]
    variant = config.fit_variant
    models = pipeline.fit_variant_models(panel, config.study, variant, keys)
    files = []

    def emit(name, result):
        path = os.path.join(config.output_dir, f"trajectory_{name}.csv")
        dlm.write_trajectory(result, path)
        files.append(path)

    for key in sorted(models["pairs"], key=lambda k: (k.lsg_id, k.category_id)):
        emit(f"{variant}_{key.lsg_id}_{key.category_id}", models["pairs"][key])
    for cat in sorted(models["effects"]):
        emit(f"{variant}_aggregate_{cat}", models["effects"][cat].filter_result)
    for key in sorted(models["prices"], key=lambda k: (k.lsg_id, k.category_id)):
        emit(f"{variant}_price_{key.lsg_id}_{key.category_id}",
             models["prices"][key].filter_result)
    return files


def _cmd_forecast(config: RunConfig) -> list:
    panel = _load_panel(config)
    result = pipeline.run_study(panel, config.study, jobs=config.jobs)
    path = config.resolved_study_path()
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    result.to_csv(path)
    return [path]


def _cmd_evaluate(config: RunConfig) -> list:
    study = _load_study(config)
    if not len(study.records):
        raise ConfigError("study file has no records")
    baseline = config.evaluate_baseline
    if baseline not in study.variants:
        raise ConfigError(
            f"[evaluate] baseline: variant {baseline!r} not in study "
            f"(has {study.variants})")
    mask_weeks = config.study.holiday_weeks if config.holiday_mask else ()
    table = evaluation.accuracy_table(study.records, holiday_weeks=mask_weeks)
    accuracy_path = os.path.join(config.output_dir, "accuracy.csv")
    evaluation.write_accuracy_csv(table, accuracy_path)
    files = [accuracy_path]

    h = config.evaluate_horizon
    at_h = table[table["horizon"] == h]
    base_tab = at_h[at_h["variant"] == baseline]
    summary = []
    for variant in study.variants:
        if variant == baseline:
            continue
        var_tab = at_h[at_h["variant"] == variant]
        if var_tab.empty or base_tab.empty:
            continue
        for metric in ("mape", "masked_mape"):
            comp = evaluation.compare_models(base_tab, var_tab, metric=metric)
            path = os.path.join(
                config.output_dir, f"comparison_{variant}_vs_{baseline}_{metric}.csv")
            evaluation.write_comparison_csv(comp, path)
            files.append(path)
            summary.append((variant, baseline, h, metric,
                            comp["fraction_improved"], len(comp["pairs"])))
    summary_path = os.path.join(config.output_dir, "comparison_summary.csv")
    pd.DataFrame(summary, columns=[
        "variant", "baseline", "horizon", "metric", "fraction_improved",
        "n_pairs"]).to_csv(summary_path, index=False)
    files.append(summary_path)
    return files


def _cmd_crosscat(config: RunConfig) -> list:
    study = _load_study(config)
    # correlations need the observed discounts, so the panel is read raw:
    # preprocessing jitter would fake near-zero correlations for series
    # the screen should instead exclude as constant
    path = config.panel_path()
    if not os.path.exists(path):
        raise ConfigError(
            f"panel file not found: {path} (set [run] input or run synth first)")
    panel = datamod.parse_panel(path)

    records = study.records
    sel = records[(records["variant"] == config.crosscat_variant)
                  & (records["horizon"] == config.crosscat_horizon)]
    if sel.empty:
        raise ConfigError(
            f"study has no records for variant {config.crosscat_variant!r} "
            f"at horizon {config.crosscat_horizon}")
    errors = pd.DataFrame({
        "lsg_id": sel["lsg_id"], "category_id": sel["category_id"],
        "week": sel["origin"] + sel["horizon"], "value": sel["std_error"],
    }).dropna(subset=["value"])

    frame = panel.frame
    cats = set(frame["category_id"])
    if config.crosscat_top_n > 0:
        totals = frame.groupby("category_id")["revenue"].sum()
        cats = set(totals.sort_values(ascending=False)
                   .head(config.crosscat_top_n).index)
        errors = errors[errors["category_id"].isin(cats)]
    weeks = set(errors["week"])
    rows = frame[frame["category_id"].isin(cats) & frame["week"].isin(weeks)]
    right = pd.DataFrame({
        "lsg_id": rows["lsg_id"], "category_id": rows["category_id"],
        "week": rows["week"], "value": rows[config.crosscat_covariate],
    }).dropna(subset=["value"])
    with np.errstate(invalid="ignore"):
        log_rev = np.log(rows["revenue"].to_numpy(dtype=float))
    revenue = pd.DataFrame({
        "lsg_id": rows["lsg_id"], "category_id": rows["category_id"],
        "week": rows["week"], "value": log_rev,
    }).dropna(subset=["value"])

    err_path = os.path.join(config.output_dir, "crosscat_errors.csv")
    rev_path = os.path.join(config.output_dir, "crosscat_revenue.csv")
    evaluation.write_crosscat_csv(
        evaluation.cross_category_correlation(errors, right), err_path)
    evaluation.write_crosscat_csv(
        evaluation.cross_category_correlation(revenue, right), rev_path)
    return [err_path, rev_path]


_HANDLERS = {
    "synth": _cmd_synth,
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "evaluate": _cmd_evaluate,
    "crosscat": _cmd_crosscat,
}


def _report(message: str):
    for line in str(message).splitlines():
        print(f"revcast: error: {line}", file=sys.stderr)


def dispatch(command: str, config: RunConfig) -> tuple:
    """Run one command; returns (exit status, emitted file paths)."""
    handler = _HANDLERS.get(command)
    if handler is None:
        _report(f"unknown command {command!r} (expected one of {COMMANDS})")
        return 2, ()
    try:
        os.makedirs(config.output_dir, exist_ok=True)
        files = handler(config)
    except RevcastError as exc:
        _report(str(exc))
        return 2, ()
    except OSError as exc:
        _report(str(exc))
        return 2, ()
    return 0, tuple(files)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="revcast",
        description="Multi-scale revenue forecasting with discount DLMs.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("-c", "--config", required=True,
                        help="path to the INI run configuration")
    parser.add_argument("--jobs", type=int, default=None,
                        help="cap worker threads (overrides [run] jobs)")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
            config = dataclasses.replace(config, jobs=args.jobs)
    except RevcastError as exc:
        _report(str(exc))
        return 2
    status, _ = dispatch(args.command, config)
    return status


if __name__ == "__main__":
    sys.exit(main())
