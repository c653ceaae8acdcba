"""Text configuration for the command line.

One INI file with named sections describes a run; each command reads
the sections it needs and ignores the rest. Lists are comma-separated,
booleans use the usual INI spellings, and every key has a default so an
empty file is a valid configuration.

Sections and keys:

[run]        input, output_dir, study, jobs
[synth]      n_lsg, n_category, n_weeks, seed, lsg_scales, noise_sds,
             seasonal_amplitude, holiday_weeks, holiday_multipliers,
             cross_effects (src:tgt:coef, ...), effect_ar_phi,
             effect_innovation_sd, regime_change_prob, regime_zero_prob,
             lsg_discount_jitter_sd, category_level_range,
             base_price_range, price_gamma_range, price_noise_sd
[model]      delta_trend, delta_harmonic, delta_regression, beta, horizon
[study]      variants, seed, mc_samples, tune, tune_grid, origin_start,
             origin_end, extra_covariates (TGT<-SRC:covariate, ...)
[holidays]   weeks, treat_missing, mask
[preprocess] enabled, negligible_threshold, jitter_sd, seed
[evaluate]   horizon, baseline, metric
[crosscat]   variant, horizon, covariate, top_n
[fit]        variant, lsg_ids, category_ids
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .data import COVARIATE_COLUMNS, SynthConfig
from .errors import ConfigError
from .pipeline import BASELINE, MS_NET, VARIANTS, StudyConfig

_SECTION_KEYS = {
    "run": {"input", "output_dir", "study", "jobs"},
    "synth": {
        "n_lsg", "n_category", "n_weeks", "seed", "lsg_scales", "noise_sds",
        "seasonal_amplitude", "holiday_weeks", "holiday_multipliers",
        "cross_effects", "effect_ar_phi", "effect_innovation_sd",
        "regime_change_prob", "regime_zero_prob", "lsg_discount_jitter_sd",
        "category_level_range", "base_price_range", "price_gamma_range",
        "price_noise_sd",
    },
    "model": {"delta_trend", "delta_harmonic", "delta_regression", "beta",
              "horizon"},
    "study": {"variants", "seed", "mc_samples", "tune", "tune_grid",
              "origin_start", "origin_end", "extra_covariates"},
    "holidays": {"weeks", "treat_missing", "mask"},
    "preprocess": {"enabled", "negligible_threshold", "jitter_sd", "seed"},
    "evaluate": {"horizon", "baseline", "metric"},
    "crosscat": {"variant", "horizon", "covariate", "top_n"},
    "fit": {"variant", "lsg_ids", "category_ids"},
}

_METRICS = ("mape", "masked_mape")


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, parsed and typed."""

    output_dir: str = "out"
    input_path: str | None = None
    study_path: str | None = None
    jobs: int = 1
    synth: SynthConfig = SynthConfig()
    study: StudyConfig = StudyConfig()
    holiday_mask: bool = True
    preprocess_enabled: bool = True
    preprocess_threshold: float = 0.5
    preprocess_jitter_sd: float = 0.1
    preprocess_seed: int = 0
    evaluate_horizon: int = 12
    evaluate_baseline: str = BASELINE
    evaluate_metric: str = "mape"
    crosscat_variant: str = MS_NET
    crosscat_horizon: int = 12
    crosscat_covariate: str = "tpr_pct"
    crosscat_top_n: int = 0          # 0 keeps every category
    fit_variant: str = BASELINE
    fit_lsg_ids: tuple | None = None
    fit_category_ids: tuple | None = None

    def panel_path(self) -> str:
        return self.input_path or os.path.join(self.output_dir, "panel.csv")

    def resolved_study_path(self) -> str:
        return self.study_path or os.path.join(self.output_dir, "study.csv")


def _bool(raw: str) -> bool:
    states = configparser.ConfigParser.BOOLEAN_STATES
    if raw.lower() not in states:
        raise ValueError(f"not a boolean: {raw!r}")
    return states[raw.lower()]


def _split(raw: str) -> list:
    return [tok.strip() for tok in raw.split(",") if tok.strip()]


def _floats(raw: str) -> tuple:
    return tuple(float(v) for v in _split(raw))


def _ints(raw: str) -> tuple:
    return tuple(int(v) for v in _split(raw))


def _strings(raw: str) -> tuple:
    return tuple(_split(raw))


def _pair(raw: str) -> tuple:
    vals = _floats(raw)
    if len(vals) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {raw!r}")
    return vals


def _scalar_or_floats(raw: str):
    vals = _floats(raw)
    return vals[0] if len(vals) == 1 else vals


def _variants(raw: str) -> tuple:
    out = tuple(tok.upper() for tok in _split(raw))
    for v in out:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    return out


def _cross_effects(raw: str) -> tuple:
    out = []
    for item in _split(raw):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected src:tgt:coef, got {item!r}")
        out.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return tuple(out)


def _extra_covariates(raw: str) -> tuple:
    out = []
    for item in _split(raw):
        head, sep, tail = item.partition("<-")
        if not sep or ":" not in tail:
            raise ValueError(f"expected TARGET<-SOURCE:covariate, got {item!r}")
        src, _, cov = tail.partition(":")
        if cov not in COVARIATE_COLUMNS:
            raise ValueError(f"{cov!r} is not a discount covariate")
        out.append((head.strip(), src.strip(), cov.strip()))
    return tuple(out)


class _Reader:
    """Typed accessors over a parsed INI file; problems accumulate."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.problems = []

    def get(self, section, key, cast, default):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return cast(raw)
        except ValueError as exc:
            self.problems.append(f"[{section}] {key}: {exc}")
            return default


def parse_config(text: str) -> RunConfig:
    """Build a RunConfig from INI text; collects every problem found."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    reader = _Reader(parser)
    problems = reader.problems
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            problems.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in _SECTION_KEYS[section]:
                problems.append(f"[{section}] unknown key {key!r}")

    g = reader.get
    base_synth = SynthConfig()
    synth = SynthConfig(
        n_lsg=g("synth", "n_lsg", int, base_synth.n_lsg),
        n_category=g("synth", "n_category", int, base_synth.n_category),
        n_weeks=g("synth", "n_weeks", int, base_synth.n_weeks),
        seed=g("synth", "seed", int, base_synth.seed),
        lsg_scales=g("synth", "lsg_scales", _floats, base_synth.lsg_scales),
        noise_sds=g("synth", "noise_sds", _scalar_or_floats, base_synth.noise_sds),
        seasonal_amplitude=g("synth", "seasonal_amplitude", float,
                             base_synth.seasonal_amplitude),
        holiday_weeks=g("synth", "holiday_weeks", _ints, base_synth.holiday_weeks),
        holiday_multipliers=g("synth", "holiday_multipliers", _scalar_or_floats,
                              base_synth.holiday_multipliers),
        cross_effects=g("synth", "cross_effects", _cross_effects,
                        base_synth.cross_effects),
        effect_ar_phi=g("synth", "effect_ar_phi", float, base_synth.effect_ar_phi),
        effect_innovation_sd=g("synth", "effect_innovation_sd", float,
                               base_synth.effect_innovation_sd),
        regime_change_prob=g("synth", "regime_change_prob", float,
                             base_synth.regime_change_prob),
        regime_zero_prob=g("synth", "regime_zero_prob", float,
                           base_synth.regime_zero_prob),
        lsg_discount_jitter_sd=g("synth", "lsg_discount_jitter_sd", float,
                                 base_synth.lsg_discount_jitter_sd),
        category_level_range=g("synth", "category_level_range", _pair,
                               base_synth.category_level_range),
        base_price_range=g("synth", "base_price_range", _pair,
                           base_synth.base_price_range),
        price_gamma_range=g("synth", "price_gamma_range", _pair,
                            base_synth.price_gamma_range),
        price_noise_sd=g("synth", "price_noise_sd", float,
                         base_synth.price_noise_sd),
    )

    base_study = StudyConfig()
    holiday_weeks = g("holidays", "weeks", _ints, ())
    study = StudyConfig(
        variants=g("study", "variants", _variants, base_study.variants),
        horizon=g("model", "horizon", int, base_study.horizon),
        delta_trend=g("model", "delta_trend", float, base_study.delta_trend),
        delta_harmonic=g("model", "delta_harmonic", float,
                         base_study.delta_harmonic),
        delta_regression=g("model", "delta_regression", float,
                           base_study.delta_regression),
        beta=g("model", "beta", float, base_study.beta),
        mc_samples=g("study", "mc_samples", int, base_study.mc_samples),
        seed=g("study", "seed", int, base_study.seed),
        origin_start=g("study", "origin_start", int, None),
        origin_end=g("study", "origin_end", int, None),
        holiday_weeks=holiday_weeks,
        holiday_treat_missing=g("holidays", "treat_missing", _bool, False),
        tune=g("study", "tune", _bool, base_study.tune),
        tune_grid=g("study", "tune_grid", _floats, base_study.tune_grid),
        extra_covariates=g("study", "extra_covariates", _extra_covariates, ()),
    )
    if parser.has_option("study", "variants") and not study.variants:
        problems.append("[study] variants: variant list must not be empty")

    evaluate_metric = g("evaluate", "metric", str, "mape")
    if evaluate_metric not in _METRICS:
        problems.append(
            f"[evaluate] metric: expected one of {_METRICS}, got {evaluate_metric!r}")
    crosscat_variant = g("crosscat", "variant", str, MS_NET).upper()
    if crosscat_variant not in VARIANTS:
        problems.append(f"[crosscat] variant: unknown variant {crosscat_variant!r}")
    crosscat_covariate = g("crosscat", "covariate", str, "tpr_pct")
    if crosscat_covariate not in COVARIATE_COLUMNS:
        problems.append(
            f"[crosscat] covariate: {crosscat_covariate!r} is not a discount covariate")
    fit_variant = g("fit", "variant", str, BASELINE).upper()
    if fit_variant not in VARIANTS:
        problems.append(f"[fit] variant: unknown variant {fit_variant!r}")

    config = RunConfig(
        output_dir=g("run", "output_dir", str, "out"),
        input_path=g("run", "input", str, None),
        study_path=g("run", "study", str, None),
        jobs=g("run", "jobs", int, 1),
        synth=synth,
        study=study,
        holiday_mask=g("holidays", "mask", _bool, True),
        preprocess_enabled=g("preprocess", "enabled", _bool, True),
        preprocess_threshold=g("preprocess", "negligible_threshold", float, 0.5),
        preprocess_jitter_sd=g("preprocess", "jitter_sd", float, 0.1),
        preprocess_seed=g("preprocess", "seed", int, 0),
        evaluate_horizon=g("evaluate", "horizon", int, study.horizon),
        evaluate_baseline=g("evaluate", "baseline", str, BASELINE).upper(),
        evaluate_metric=evaluate_metric,
        crosscat_variant=crosscat_variant,
        crosscat_horizon=g("crosscat", "horizon", int, study.horizon),
        crosscat_covariate=crosscat_covariate,
        crosscat_top_n=g("crosscat", "top_n", int, 0),
        fit_variant=fit_variant,
        fit_lsg_ids=g("fit", "lsg_ids", _strings, None),
        fit_category_ids=g("fit", "category_ids", _strings, None),
    )
    try:
        study.validate()
    except ConfigError as exc:
        problems.append(str(exc))
    if config.jobs < 1:
        problems.append(f"[run] jobs must be >= 1, got {config.jobs}")
    if problems:
        raise ConfigError("\n".join(problems))
    return config


def load_config(path) -> RunConfig:
    """Read an INI file from disk and parse it."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return parse_config(text)
