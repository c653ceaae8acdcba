"""Tests for the multi-scale study pipeline."""

import numpy as np
import pandas as pd
import pytest

from revcast import data, dlm, pipeline
from revcast.errors import ConfigError, DataError, DimensionError


def frame_from_rows(rows):
    return pd.DataFrame(rows, columns=list(data.PANEL_COLUMNS))


def small_panel(seed=0, n_lsg=2, n_category=2, n_weeks=110, **kw):
    panel, _ = data.generate_synthetic(data.SynthConfig(
        n_lsg=n_lsg, n_category=n_category, n_weeks=n_weeks, seed=seed, **kw))
    return panel


def quick_config(**kw):
    kw.setdefault("variants", (pipeline.BASELINE,))
    kw.setdefault("horizon", 4)
    kw.setdefault("origin_start", 60)
    kw.setdefault("origin_end", 69)
    return pipeline.StudyConfig(**kw)


# ---------------------------------------------------------------------------
# Aggregation


def test_aggregate_sums_revenue_and_averages_discounts():
    rows = []
    # L1 observed every week; L2 missing revenue at week 1; week 2 dark
    rev = {("L1", 0): 100.0, ("L1", 1): 110.0, ("L1", 2): np.nan,
           ("L2", 0): 50.0, ("L2", 1): np.nan, ("L2", 2): np.nan}
    tpr = {("L1", 0): 10.0, ("L1", 1): 20.0, ("L1", 2): 30.0,
           ("L2", 0): 20.0, ("L2", 1): 40.0, ("L2", 2): 50.0}
    for z in ("L1", "L2"):
        for w in range(3):
            rows.append((w, z, "A", rev[(z, w)], tpr[(z, w)], 0.0, 0.0, 4.0, 5.0))
    panel = data.panel_from_frame(frame_from_rows(rows))
    agg = pipeline.aggregate_category(panel, "A")

    np.testing.assert_array_equal(agg.n_present, [2, 1, 0])
    np.testing.assert_allclose(agg.revenue[:2], [150.0, 110.0])
    assert np.isnan(agg.revenue[2])
    # week 0: mean over both; week 1: L1 only; week 2: row-mean fallback
    np.testing.assert_allclose(agg.covariates["tpr_pct"], [15.0, 20.0, 40.0])


def test_aggregate_rejects_unknown_category():
    panel = small_panel(n_weeks=10)
    with pytest.raises(DataError, match="not present"):
        pipeline.aggregate_category(panel, "NOPE")


def test_fit_aggregate_recovers_constant_effect():
    rng = np.random.default_rng(3)
    T = 260
    weeks = np.arange(T)
    tpr = rng.choice([0.0, 10.0, 25.0, 40.0], T)
    revenue = np.exp(5.0 + 0.02 * tpr + rng.normal(0.0, 0.01, T))
    agg = pipeline.AggregateSeries(
        category_id="A", weeks=weeks, revenue=revenue,
        covariates={"tpr_pct": tpr}, n_present=np.ones(T, dtype=int))
    traj = pipeline.fit_aggregate(agg, covariates=("tpr_pct",))
    assert traj.covariates == ("tpr_pct",)
    assert traj.means.shape == (T, 1)
    assert traj.filter_result is not None
    assert traj.means[-1, 0] == pytest.approx(0.02, abs=3e-3)


def test_fit_aggregate_rejects_empty_series():
    agg = pipeline.AggregateSeries(category_id="A", weeks=np.array([]),
                                   revenue=np.array([]), covariates={},
                                   n_present=np.array([]))
    with pytest.raises(DataError, match="empty"):
        pipeline.fit_aggregate(agg)


def test_fit_aggregate_optional_draws_shape():
    rng = np.random.default_rng(0)
    T = 60
    agg = pipeline.AggregateSeries(
        category_id="A", weeks=np.arange(T),
        revenue=np.exp(rng.normal(4.0, 0.1, T)),
        covariates={"tpr_pct": rng.uniform(0, 30, T)},
        n_present=np.ones(T, dtype=int))
    traj = pipeline.fit_aggregate(agg, covariates=("tpr_pct",), n_draws=7, seed=1)
    assert traj.draws.shape == (T, 7, 1)


# ---------------------------------------------------------------------------
# Multi-scale regressors and effects


def test_regression_effect_inner_product_and_name_check():
    X = {"tpr_pct": 10.0, "adfront_pct": 5.0}
    theta = {"tpr_pct": 0.02, "adfront_pct": 0.01}
    assert pipeline.regression_effect(X, theta) == pytest.approx(0.25)
    with pytest.raises(DataError, match="name mismatch"):
        pipeline.regression_effect(X, {"tpr_pct": 0.02})


def test_build_multiscale_regressors_products():
    traj = pipeline.EffectTrajectory(
        category_id="A", weeks=np.arange(5),
        covariates=("tpr_pct", "adfront_pct"),
        means=np.column_stack([np.full(5, 0.02), np.linspace(0.0, 0.04, 5)]))
    X = {"tpr_pct": np.array([10.0, 0.0, 30.0])}
    out = pipeline.build_multiscale_regressors(X, traj, weeks=[0, 2, 4])
    assert set(out) == {"tpr_pct"}
    np.testing.assert_allclose(out["tpr_pct"], [0.2, 0.0, 0.6])


def test_build_multiscale_regressors_rejects_misaligned_weeks():
    traj = pipeline.EffectTrajectory(
        category_id="A", weeks=np.array([0, 2, 4]),
        covariates=("tpr_pct",), means=np.full((3, 1), 0.02))
    with pytest.raises(DimensionError, match="not aligned"):
        pipeline.build_multiscale_regressors({"tpr_pct": np.ones(1)}, traj, weeks=[1])
    with pytest.raises(DimensionError, match="not aligned"):
        pipeline.build_multiscale_regressors({"tpr_pct": np.ones(1)}, traj, weeks=[6])


# ---------------------------------------------------------------------------
# Net-price companion model


def test_fit_netprice_tracks_discount_dependence():
    rng = np.random.default_rng(8)
    T = 150
    tpr = rng.choice([0.0, 15.0, 30.0], T)
    log_p = 1.5 - 0.012 * tpr + rng.normal(0.0, 0.002, T)
    covs = {"tpr_pct": tpr}
    model = pipeline.fit_netprice(np.arange(T), np.exp(log_p), covs)
    path = pipeline.price_plugin_path(
        model, T - 1, {"tpr_pct": np.full(T + 6, 30.0)}, k=6)
    assert path.shape == (6,)
    np.testing.assert_allclose(path, 1.5 - 0.012 * 30.0, atol=0.02)


def test_fit_netprice_rejects_nonpositive_prices():
    with pytest.raises(DataError, match="positive"):
        pipeline.fit_netprice(np.arange(3), [2.0, 0.0, 2.0],
                              {"tpr_pct": np.zeros(3)})


def test_price_plugin_path_rejects_unknown_origin():
    model = pipeline.fit_netprice(np.arange(10), np.full(10, 4.0),
                                  {"tpr_pct": np.zeros(10)})
    with pytest.raises(DataError, match="origin week"):
        pipeline.price_plugin_path(model, 99, {"tpr_pct": np.zeros(20)}, k=2)


# ---------------------------------------------------------------------------
# Rolling-origin study


def test_run_study_record_count_and_columns():
    panel = small_panel(seed=1)
    config = quick_config(variants=(pipeline.BASELINE, pipeline.MS))
    result = pipeline.run_study(panel, config)
    n_origins = 10
    n_pairs = 4
    assert len(result.records) == n_origins * config.horizon * n_pairs * 2
    assert tuple(result.records.columns) == pipeline.RECORD_COLUMNS
    assert result.horizon == config.horizon
    assert result.variants == (pipeline.BASELINE, pipeline.MS)
    assert result.origins == tuple(range(60, 70))
    # past-the-end targets have no actual
    tail = result.records[result.records["origin"] + result.records["horizon"] > 109]
    assert tail.empty or tail["actual"].isna().all()


def test_run_study_is_deterministic():
    panel = small_panel(seed=2)
    config = quick_config(variants=(pipeline.BASELINE, pipeline.MS_NET))
    a = pipeline.run_study(panel, config)
    b = pipeline.run_study(panel, config)
    pd.testing.assert_frame_equal(a.records, b.records, check_exact=True)


def test_run_study_is_jobs_invariant():
    panel = small_panel(seed=3)
    config = quick_config(variants=(pipeline.BASELINE, pipeline.MS))
    a = pipeline.run_study(panel, config, jobs=1)
    b = pipeline.run_study(panel, config, jobs=3)
    pd.testing.assert_frame_equal(a.records, b.records, check_exact=True)


def test_run_study_rejects_short_panels():
    panel = small_panel(n_weeks=60)
    with pytest.raises(ConfigError, match="104 weeks"):
        pipeline.run_study(panel, quick_config())


def test_run_study_rejects_origins_outside_panel():
    panel = small_panel()
    with pytest.raises(ConfigError, match="origins"):
        pipeline.run_study(panel, quick_config(origin_start=60, origin_end=500))


def test_ms_equals_baseline_when_covariates_are_zero():
    # With every discount at zero the multi-scale products vanish, so
    # both variants filter identical observation vectors.
    panel = small_panel(seed=4)
    frame = panel.frame.copy()
    for cov in data.COVARIATE_COLUMNS:
        frame[cov] = 0.0
    panel = data.panel_from_frame(frame)
    result = pipeline.run_study(panel, quick_config(
        variants=(pipeline.BASELINE, pipeline.MS)))
    base = result.records[result.records["variant"] == "BASELINE"]
    ms = result.records[result.records["variant"] == "MS"]
    for col in ("location", "scale", "dof", "point_mape_opt", "lo90", "hi90"):
        np.testing.assert_allclose(ms[col].to_numpy(), base[col].to_numpy(),
                                   rtol=1e-12)


def test_run_study_with_tuning_smoke():
    panel = small_panel(seed=5)
    config = quick_config(tune=True, tune_grid=(0.98, 1.0))
    a = pipeline.run_study(panel, config)
    b = pipeline.run_study(panel, config)
    pd.testing.assert_frame_equal(a.records, b.records, check_exact=True)


def test_study_result_csv_round_trip(tmp_path):
    panel = small_panel(seed=6)
    result = pipeline.run_study(panel, quick_config(origin_end=62))
    path = tmp_path / "study.csv"
    result.to_csv(path)
    back = pipeline.StudyResult.read_csv(path)
    pd.testing.assert_frame_equal(back.records, result.records, check_exact=True)
    assert back.horizon == result.horizon
    assert back.variants == result.variants
    assert back.origins == result.origins


# ---------------------------------------------------------------------------
# Single-pair forecasting API


def test_forecast_pair_matches_study_records():
    panel = small_panel(seed=7)
    config = quick_config()
    result = pipeline.run_study(panel, config)
    key = pipeline.SeriesKey(panel.lsg_ids[0], panel.category_ids[1])
    dists = pipeline.forecast_pair(key, pipeline.BASELINE, origin_t=65,
                                   k=config.horizon, panel=panel, config=config)
    rows = result.records[
        (result.records["lsg_id"] == key.lsg_id)
        & (result.records["category_id"] == key.category_id)
        & (result.records["origin"] == 65)].sort_values("horizon")
    assert len(dists) == config.horizon
    np.testing.assert_allclose([d.location for d in dists], rows["location"],
                               rtol=1e-12)
    np.testing.assert_allclose([d.scale for d in dists], rows["scale"], rtol=1e-12)
    np.testing.assert_allclose([d.dof for d in dists], rows["dof"], rtol=1e-12)


def test_forecast_pair_checks_prerequisites():
    panel = small_panel(n_weeks=60)
    key = pipeline.SeriesKey(panel.lsg_ids[0], panel.category_ids[0])
    with pytest.raises(ConfigError, match="unknown variant"):
        pipeline.forecast_pair(key, "WAT", 30, 4, panel)
    with pytest.raises(ConfigError, match="effect trajectory"):
        pipeline.forecast_pair(key, pipeline.MS, 30, 4, panel)
    with pytest.raises(ConfigError, match="price model"):
        pipeline.forecast_pair(key, pipeline.NET, 30, 4, panel)
    with pytest.raises(DataError, match="not present"):
        pipeline.forecast_pair(pipeline.SeriesKey("L99", "C999"),
                               pipeline.BASELINE, 30, 4, panel)


def test_fit_variant_models_outputs_by_variant():
    panel = small_panel(n_weeks=60)
    config = pipeline.StudyConfig(variants=(pipeline.MS_NET,), horizon=4)
    out = pipeline.fit_variant_models(panel, config, pipeline.MS_NET)
    pairs = out["pairs"]
    assert set(pairs) == {pipeline.SeriesKey(z, c)
                          for z in panel.lsg_ids for c in panel.category_ids}
    assert set(out["effects"]) == set(panel.category_ids)
    assert set(out["prices"]) == set(pairs)
    fr = pairs[pipeline.SeriesKey(panel.lsg_ids[0], panel.category_ids[0])]
    assert fr.n_weeks == 60

    base = pipeline.fit_variant_models(panel, config, pipeline.BASELINE)
    assert base["effects"] == {} and base["prices"] == {}
    with pytest.raises(ConfigError, match="unknown variant"):
        pipeline.fit_variant_models(panel, config, "WAT")


def test_forecast_pair_samples_pool_around_plugin_location():
    panel = small_panel(seed=9, n_weeks=80)
    config = pipeline.StudyConfig(variants=(pipeline.MS,), horizon=4)
    out = pipeline.fit_variant_models(panel, config, pipeline.MS)
    key = pipeline.SeriesKey(panel.lsg_ids[0], panel.category_ids[0])
    effects = out["effects"][key.category_id]

    draws = pipeline.forecast_pair_samples(
        key, pipeline.MS, origin_t=70, k=4, panel=panel, effects=effects,
        config=config, n_effect_draws=40, mc_per_draw=30, seed=5)
    assert draws.shape == (4, 1200)
    again = pipeline.forecast_pair_samples(
        key, pipeline.MS, origin_t=70, k=4, panel=panel, effects=effects,
        config=config, n_effect_draws=40, mc_per_draw=30, seed=5)
    np.testing.assert_array_equal(draws, again)

    dists = pipeline.forecast_pair(key, pipeline.MS, 70, 4, panel,
                                   effects=effects, config=config)
    for j, d in enumerate(dists):
        se = np.sqrt(d.scale / draws.shape[1]) * 6  # generous CLT band
        assert abs(draws[j].mean() - d.location) < max(se, 0.05)


def test_forecast_pair_samples_requires_multiscale_variant():
    panel = small_panel(n_weeks=60)
    key = pipeline.SeriesKey(panel.lsg_ids[0], panel.category_ids[0])
    traj = pipeline.EffectTrajectory(category_id="C001", weeks=np.arange(60),
                                     covariates=("tpr_pct",),
                                     means=np.zeros((60, 1)))
    with pytest.raises(ConfigError, match="multi-scale"):
        pipeline.forecast_pair_samples(key, pipeline.BASELINE, 30, 2, panel, traj)
    with pytest.raises(ConfigError, match="filter result"):
        pipeline.forecast_pair_samples(key, pipeline.MS, 30, 2, panel, traj)


# ---------------------------------------------------------------------------
# Config validation


def test_study_config_validation():
    with pytest.raises(ConfigError, match="must not be empty"):
        pipeline.StudyConfig(variants=()).validate()
    with pytest.raises(ConfigError, match="unknown variant"):
        pipeline.StudyConfig(variants=("WAT",)).validate()
    with pytest.raises(ConfigError, match="horizon"):
        pipeline.StudyConfig(horizon=0).validate()
    with pytest.raises(ConfigError, match="mc_samples"):
        pipeline.StudyConfig(mc_samples=10).validate()
    with pytest.raises(ConfigError, match="not a discount covariate"):
        pipeline.StudyConfig(extra_covariates=(("A", "B", "revenue"),)).validate()
    pipeline.StudyConfig().validate()
