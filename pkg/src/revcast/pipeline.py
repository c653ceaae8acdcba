"""Multi-scale forecasting pipeline over an LSG-Category panel.

The hierarchy has three steps: model aggregate revenue per Category
across LSGs, extract the per-week posterior means of the discount
coefficients, then feed those means into each LSG-level model as
multiplicative regressors (covariate times aggregate effect). A
companion model on log Net Price supplies plug-in future prices for the
variants that condition on price. The rolling-origin study fits every
series once by sequential filtering, so the posterior at each origin
week is available from a single pass, then forecasts horizons 1..k from
every origin of the evaluation year.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy import stats

from . import dlm
from .data import COVARIATE_COLUMNS, Panel, PanelCube
from .errors import ConfigError, DataError, DimensionError
from .evaluation import TiltedDrawCache, batch_point_mape_optimal

BASELINE = "BASELINE"
MS = "MS"
NET = "NET"
MS_NET = "MS_NET"
VARIANTS = (BASELINE, MS, NET, MS_NET)

NET_PRICE_NAME = "log_net_price"
BASE_PRICE_NAME = "log_base_price"


def variant_needs_effects(variant: str) -> bool:
    return variant in (MS, MS_NET)


def variant_needs_price(variant: str) -> bool:
    return variant in (NET, MS_NET)


@dataclass(frozen=True)
class SeriesKey:
    lsg_id: str
    category_id: str


@dataclass
class EffectTrajectory:
    """Per-week aggregate discount-effect means for one category."""

    category_id: str
    weeks: np.ndarray
    covariates: tuple
    means: np.ndarray                 # (W, n_cov)
    filter_result: dlm.FilterResult | None = None
    draws: np.ndarray | None = None   # (W, n_draws, n_cov)


@dataclass(frozen=True)
class AggregateSeries:
    """Cross-LSG aggregate for one category: summed revenue, mean discounts."""

    category_id: str
    weeks: np.ndarray
    revenue: np.ndarray      # (W,), NaN where no LSG is present
    covariates: dict         # name -> (W,)
    n_present: np.ndarray    # LSGs contributing revenue each week


@dataclass
class PriceModel:
    """Fitted DLM on log Net Price for one series."""

    key: SeriesKey
    structure: dlm.ModelStructure
    covariate_names: tuple
    weeks: np.ndarray
    filter_result: dlm.FilterResult


@dataclass(frozen=True)
class StudyConfig:
    """Knobs for the rolling-origin study."""

    variants: tuple = VARIANTS
    horizon: int = 12
    delta_trend: float = 0.98
    delta_harmonic: float = 0.98
    delta_regression: float = 0.99
    beta: float = 0.99
    mc_samples: int = 1000
    seed: int = 0
    origin_start: int | None = None   # default: first week + 52
    origin_end: int | None = None     # default: last week
    holiday_weeks: tuple = ()
    holiday_treat_missing: bool = False
    tune: bool = False
    tune_grid: tuple = (0.97, 0.98, 0.99, 1.0)
    extra_covariates: tuple = ()      # (target_category_id, source_category_id, covariate)

    def validate(self):
        if not self.variants:
            raise ConfigError("variant list must not be empty")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; expected one of {VARIANTS}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.mc_samples < 1000:
            raise ConfigError(f"mc_samples must be >= 1000, got {self.mc_samples}")
        for tgt, src, cov in self.extra_covariates:
            if cov not in COVARIATE_COLUMNS:
                raise ConfigError(f"extra covariate {cov!r} is not a discount covariate")


@dataclass
class StudyResult:
    """Forecast records for every (origin, pair, variant, horizon)."""

    records: pd.DataFrame
    horizon: int
    variants: tuple
    origins: tuple

    def to_csv(self, path):
        self.records.to_csv(path, index=False,
                            float_format=lambda v: repr(float(v)))

    @staticmethod
    def read_csv(path) -> "StudyResult":
        df = pd.read_csv(path, dtype={"lsg_id": str, "category_id": str,
                                      "variant": str},
                         float_precision="round_trip")
        return StudyResult(
            records=df,
            horizon=int(df["horizon"].max()) if len(df) else 0,
            variants=tuple(sorted(df["variant"].unique())),
            origins=tuple(np.sort(df["origin"].unique()).tolist()),
        )


RECORD_COLUMNS = (
    "origin", "lsg_id", "category_id", "variant", "horizon",
    "location", "scale", "dof", "point_mape_opt", "point_median",
    "lo90", "hi90", "actual", "error", "std_error",
)


# ---------------------------------------------------------------------------
# Aggregation and effect extraction


def aggregate_category(panel: Panel, category_id: str) -> AggregateSeries:
    """Sum revenue and average discounts across LSGs for one category.

    An LSG counts as present at a week when its revenue is observed
    there; discount means run over present LSGs, falling back to all
    LSGs with rows when a week has no revenue anywhere (so the series
    stays filterable through missing stretches).
    """
    cube = panel.cube()
    if category_id not in cube.category_ids:
        raise DataError(f"category {category_id!r} not present in panel")
    return _aggregate_from_cube(cube, cube.cat_index(category_id), cube.revenue)


def _aggregate_from_cube(cube: PanelCube, ci: int, revenue) -> AggregateSeries:
    rev = revenue[ci]                       # (Z, W)
    present = np.isfinite(rev)
    n_present = present.sum(axis=0)
    with np.errstate(invalid="ignore"):
        total = np.where(n_present > 0, np.nansum(rev, axis=0), np.nan)
    covs = {}
    rows = cube.present[ci]
    n_rows = rows.sum(axis=0)
    for name, vals in cube.covariates.items():
        v = vals[ci]
        summed = np.nansum(np.where(present, v, 0.0), axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = summed / n_present
            row_mean = np.nansum(np.where(rows, np.nan_to_num(v), 0.0), axis=0) / np.maximum(n_rows, 1)
        mean = np.where(n_present > 0, mean, row_mean)
        covs[name] = np.where(np.isfinite(mean), mean, 0.0)
    return AggregateSeries(
        category_id=cube.category_ids[ci], weeks=cube.weeks.copy(),
        revenue=total, covariates=covs, n_present=n_present,
    )


def fit_aggregate(series: AggregateSeries, *, delta_trend=0.98, delta_harmonic=0.98,
                  delta_regression=0.99, beta=0.99, covariates=None,
                  n_draws=0, seed=0) -> EffectTrajectory:
    """Filter log aggregate revenue and extract discount-effect means.

    The model is trend + harmonic(52) + regression on the aggregate
    discount covariates; the trajectory holds each week's posterior mean
    of the regression coefficients (the plug-in effects), plus optional
    per-week posterior draws.
    """
    if not series.weeks.size:
        raise DataError("aggregate series is empty")
    names = tuple(covariates) if covariates is not None else tuple(
        c for c in COVARIATE_COLUMNS if c in series.covariates)
    structure = dlm.superpose([
        dlm.build_component(dlm.TREND, delta=delta_trend),
        dlm.build_component(dlm.HARMONIC, period=52, delta=delta_harmonic),
        dlm.build_component(dlm.REGRESSION, covariate_names=names, delta=delta_regression),
    ], variance_discount=beta)
    with np.errstate(invalid="ignore"):
        y = np.log(series.revenue)
    fr = dlm.filter_series(structure, series.covariates, y)
    reg0 = structure.total_dimension - len(names)
    means = fr.m[:, reg0:]
    draws = None
    if n_draws > 0:
        draws = np.empty((fr.n_weeks, n_draws, len(names)))
        for t in range(fr.n_weeks):
            sampled = dlm.sample_states(
                fr.posterior_at(t), n_draws,
                np.random.SeedSequence([seed, t]).generate_state(1)[0])
            draws[t] = sampled[:, reg0:]
    return EffectTrajectory(
        category_id=series.category_id, weeks=series.weeks.copy(),
        covariates=names, means=means, filter_result=fr, draws=draws,
    )


def regression_effect(X, theta) -> float:
    """Inner product of discount covariates with effect coefficients."""
    if set(X) != set(theta):
        raise DataError(
            f"covariate name mismatch: X has {sorted(X)}, theta has {sorted(theta)}")
    return float(sum(X[name] * theta[name] for name in X))


def build_multiscale_regressors(X_local, effects: EffectTrajectory, weeks) -> dict:
    """Element-wise products of local covariates with aggregate effects.

    X_local maps covariate name to a per-week array aligned with
    `weeks`; each requested week must be covered by the trajectory.
    """
    weeks = np.asarray(weeks)
    idx = np.searchsorted(effects.weeks, weeks)
    if (idx >= effects.weeks.size).any() or (effects.weeks[idx] != weeks).any():
        raise DimensionError("weeks are not aligned with the effect trajectory")
    out = {}
    for k, name in enumerate(effects.covariates):
        if name in X_local:
            out[name] = np.asarray(X_local[name], dtype=float) * effects.means[idx, k]
    return out


def fit_netprice(weeks, net_price, covariates, *, delta_trend=0.98,
                 delta_regression=0.99, beta=0.99, key=None) -> PriceModel:
    """Fit the companion DLM on log Net Price for one series.

    The model is trend + regression on the discount covariates and log
    base price (no seasonal block); its plug-in forecast is the
    predictive median, exp(location) in price space.
    """
    weeks = np.asarray(weeks)
    p = np.asarray(net_price, dtype=float)
    if (np.isfinite(p) & (p <= 0)).any():
        raise DataError("net price must be strictly positive where observed")
    names = tuple(n for n in covariates)
    structure = dlm.superpose([
        dlm.build_component(dlm.TREND, delta=delta_trend),
        dlm.build_component(dlm.REGRESSION, covariate_names=names, delta=delta_regression),
    ], variance_discount=beta)
    with np.errstate(invalid="ignore"):
        y = np.log(p)
    fr = dlm.filter_series(structure, covariates, y)
    return PriceModel(key=key, structure=structure, covariate_names=names,
                      weeks=weeks.copy(), filter_result=fr)


def price_plugin_path(model: PriceModel, origin_t: int, future_covariates, k: int) -> np.ndarray:
    """Plug-in log Net Price path for horizons 1..k from an origin week.

    Returns the k-step forecast medians in log space (the location of
    each horizon's Student-t).
    """
    idx = int(np.searchsorted(model.weeks, origin_t))
    if idx >= model.weeks.size or model.weeks[idx] != origin_t:
        raise DataError(f"origin week {origin_t} outside the fitted price range")
    dists = dlm.forecast_ahead(model.filter_result.posterior_at(idx),
                               model.structure, future_covariates, k)
    return np.array([d.location for d in dists])


# ---------------------------------------------------------------------------
# Study internals


def _ffill(arr: np.ndarray) -> np.ndarray:
    """Forward- then backward-fill NaNs; all-NaN becomes zeros."""
    out = np.asarray(arr, dtype=float).copy()
    ok = np.isfinite(out)
    if ok.all():
        return out
    if not ok.any():
        return np.zeros_like(out)
    idx = np.where(ok, np.arange(out.size), 0)
    np.maximum.accumulate(idx, out=idx)
    out = out[idx]
    first = np.flatnonzero(np.isfinite(out))[0]
    out[:first] = out[first]
    return out


def _extend(arr: np.ndarray, k: int) -> np.ndarray:
    """Carry the last value forward k weeks past the end of the panel."""
    filled = _ffill(arr)
    return np.concatenate([filled, np.full(k, filled[-1])])


@dataclass
class _StudyContext:
    cube: PanelCube
    config: StudyConfig
    w_lo: int
    w_hi: int
    rev_eval: np.ndarray      # original revenue (C, Z, W)
    rev_fit: np.ndarray       # filtering revenue, holidays possibly NaN'd
    log_rev_fit: np.ndarray   # log of rev_fit
    active: dict              # category_id -> tuple of active covariates
    delta_regression: float
    beta: float

    def cat_active(self, category_id):
        return self.active[category_id]


def _build_context(panel: Panel, config: StudyConfig) -> _StudyContext:
    cube = panel.cube()
    w_lo, w_hi = int(cube.weeks[0]), int(cube.weeks[-1])
    rev_fit = cube.revenue.copy()
    if config.holiday_treat_missing and config.holiday_weeks:
        cols = [w - w_lo for w in config.holiday_weeks if w_lo <= w <= w_hi]
        rev_fit[:, :, cols] = np.nan
    with np.errstate(invalid="ignore"):
        log_rev_fit = np.log(rev_fit)
    active = {c: panel.active_covariates(c) for c in cube.category_ids}
    return _StudyContext(
        cube=cube, config=config, w_lo=w_lo, w_hi=w_hi,
        rev_eval=cube.revenue, rev_fit=rev_fit, log_rev_fit=log_rev_fit, active=active,
        delta_regression=config.delta_regression, beta=config.beta,
    )


def _revenue_structure(ctx: _StudyContext, category_id: str, variant: str,
                       cache: dict) -> dlm.ModelStructure:
    keyed = (category_id, variant)
    if keyed in cache:
        return cache[keyed]
    cfg = ctx.config
    names = []
    for cov in ctx.cat_active(category_id):
        names.append(f"ms_{cov}" if variant_needs_effects(variant) else cov)
    for tgt, src, cov in cfg.extra_covariates:
        if tgt == category_id:
            names.append(f"x_{src}_{cov}")
    if variant_needs_price(variant):
        names.append(NET_PRICE_NAME)
    blocks = [
        dlm.build_component(dlm.TREND, delta=cfg.delta_trend),
        dlm.build_component(dlm.HARMONIC, period=52, delta=cfg.delta_harmonic),
    ]
    if names:
        blocks.append(dlm.build_component(
            dlm.REGRESSION, covariate_names=tuple(names), delta=ctx.delta_regression))
    structure = dlm.superpose(blocks, variance_discount=ctx.beta)
    cache[keyed] = structure
    return structure


def _fit_pair_price(ctx: _StudyContext, key: SeriesKey) -> PriceModel:
    cube = ctx.cube
    ci = cube.cat_index(key.category_id)
    zi = cube.lsg_index(key.lsg_id)
    covs = {c: _ffill(cube.covariates[c][ci, zi]) for c in ctx.cat_active(key.category_id)}
    with np.errstate(invalid="ignore"):
        covs[BASE_PRICE_NAME] = _ffill(np.log(cube.base_price[ci, zi]))
    return fit_netprice(
        cube.weeks, cube.net_price[ci, zi], covs,
        delta_trend=ctx.config.delta_trend, delta_regression=ctx.delta_regression,
        beta=ctx.beta, key=key,
    )


LOADING_PRIOR_SD = 0.15


def _revenue_prior(structure: dlm.ModelStructure, y: np.ndarray) -> dlm.StatePosterior:
    """Initial prior for a revenue model; multi-scale loadings shrink to 1.

    The ms_* regressors already carry the aggregate effect, so the local
    coefficient measures deviation from the pooled estimate. Its prior is
    centered at 1 with a fixed absolute sd rather than the data-anchored
    s0: noisy series then inherit the pooled effect (their own data can't
    override it) while clean series are free to deviate.
    """
    prior = dlm.default_initial_prior(structure, y)
    m = prior.m.copy()
    C = prior.C.copy()
    for idx, name in structure.named_entries:
        if name.startswith("ms_"):
            m[idx] = 1.0
            C[idx, idx] = LOADING_PRIOR_SD ** 2
    return replace(prior, m=m, C=C)


def _pair_filter_inputs(ctx: _StudyContext, key: SeriesKey, variant: str,
                        effects: EffectTrajectory | None, structure_cache: dict):
    """Structure and filtering covariate table for one pair and variant."""
    cube = ctx.cube
    ci = cube.cat_index(key.category_id)
    zi = cube.lsg_index(key.lsg_id)
    structure = _revenue_structure(ctx, key.category_id, variant, structure_cache)
    filter_cov = {}
    for cov in ctx.cat_active(key.category_id):
        x = _ffill(cube.covariates[cov][ci, zi])
        if variant_needs_effects(variant):
            eff_col = effects.covariates.index(cov)
            filter_cov[f"ms_{cov}"] = x * effects.means[:, eff_col]
        else:
            filter_cov[cov] = x
    for tgt, src, cov in ctx.config.extra_covariates:
        if tgt == key.category_id:
            filter_cov[f"x_{src}_{cov}"] = _ffill(
                cube.covariates[cov][cube.cat_index(src), zi])
    if variant_needs_price(variant):
        with np.errstate(invalid="ignore"):
            filter_cov[NET_PRICE_NAME] = _ffill(np.log(cube.net_price[ci, zi]))
    return structure, filter_cov


def _pair_future_F(ctx: _StudyContext, key: SeriesKey, variant: str,
                   origins: np.ndarray, effects: EffectTrajectory | None,
                   price_model: PriceModel | None, structure: dlm.ModelStructure,
                   frozen_effects: np.ndarray | None = None) -> np.ndarray:
    """Resolved future observation vectors, (origins, horizon, dim).

    Discount covariates are carried forward past the end of the panel;
    multi-scale products freeze the effect means at each origin (or use
    `frozen_effects` (O, n_cov) when effect draws are being pooled);
    the price slot takes the price model's plug-in log-price path.
    """
    cube = ctx.cube
    k = ctx.config.horizon
    ci = cube.cat_index(key.category_id)
    zi = cube.lsg_index(key.lsg_id)
    o_idx = origins - ctx.w_lo
    fut_idx = o_idx[:, None] + np.arange(1, k + 1)[None, :]
    F_future = np.tile(structure.F_base, (origins.size, k, 1))
    slot = {name: i for i, name in structure.named_entries}

    raw_ext = {}
    for cov in ctx.cat_active(key.category_id):
        raw_ext[cov] = _extend(cube.covariates[cov][ci, zi], k)
        if variant_needs_effects(variant):
            eff_col = effects.covariates.index(cov)
            if frozen_effects is not None:
                frozen = frozen_effects[:, eff_col]
            else:
                frozen = effects.means[o_idx, eff_col]
            F_future[:, :, slot[f"ms_{cov}"]] = raw_ext[cov][fut_idx] * frozen[:, None]
        else:
            F_future[:, :, slot[cov]] = raw_ext[cov][fut_idx]

    for tgt, src, cov in ctx.config.extra_covariates:
        if tgt == key.category_id:
            sx = _extend(cube.covariates[cov][cube.cat_index(src), zi], k)
            F_future[:, :, slot[f"x_{src}_{cov}"]] = sx[fut_idx]

    if variant_needs_price(variant):
        price_fr = price_model.filter_result
        p_future = np.tile(price_model.structure.F_base, (origins.size, k, 1))
        p_slot = {name: i for i, name in price_model.structure.named_entries}
        for cov in price_model.covariate_names:
            if cov == BASE_PRICE_NAME:
                with np.errstate(invalid="ignore"):
                    ext = _extend(np.log(cube.base_price[ci, zi]), k)
            else:
                ext = raw_ext.get(cov)
                if ext is None:
                    ext = _extend(cube.covariates[cov][ci, zi], k)
            p_future[:, :, p_slot[cov]] = ext[fut_idx]
        p_loc, _, _ = dlm.forecast_at_origins(
            price_model.structure, price_fr.m[o_idx], price_fr.C[o_idx],
            price_fr.n[o_idx], price_fr.s[o_idx], p_future)
        F_future[:, :, slot[NET_PRICE_NAME]] = p_loc
    return F_future


def _pair_variant_forecasts(ctx: _StudyContext, key: SeriesKey, variant: str,
                            origins: np.ndarray, effects: EffectTrajectory | None,
                            price_model: PriceModel | None, structure_cache: dict,
                            frozen_effects: np.ndarray | None = None):
    """Filter one pair under one variant and forecast from every origin.

    Returns (location (O, k), scale (O, k), dof (O,)). Multi-scale
    regressors use the real-time effect means while filtering and the
    origin-frozen means for future weeks; price-dependent variants use
    realized log Net Price in the past and the price model's plug-in
    path ahead.
    """
    cube = ctx.cube
    ci = cube.cat_index(key.category_id)
    zi = cube.lsg_index(key.lsg_id)
    structure, filter_cov = _pair_filter_inputs(ctx, key, variant, effects,
                                                structure_cache)
    F_future = _pair_future_F(ctx, key, variant, origins, effects, price_model,
                              structure, frozen_effects)
    o_idx = origins - ctx.w_lo
    y = ctx.log_rev_fit[ci, zi]
    fr = dlm.filter_series(structure, filter_cov, y,
                           initial_prior=_revenue_prior(structure, y))
    loc, scale, dof = dlm.forecast_at_origins(
        structure, fr.m[o_idx], fr.C[o_idx], fr.n[o_idx], fr.s[o_idx], F_future)
    return loc, scale, dof


def fit_variant_models(panel: Panel, config: StudyConfig, variant: str,
                       keys=None) -> dict:
    """Fit one variant's models over the full panel span.

    Returns a dict with "pairs" (SeriesKey -> FilterResult on log
    revenue), "effects" (category -> EffectTrajectory, when the variant
    uses them), and "prices" (SeriesKey -> PriceModel, when it needs
    them). Used by the fit command to export posterior trajectories.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    ctx = _build_context(panel, config)
    cube = ctx.cube
    if keys is None:
        keys = [SeriesKey(z, c) for c in cube.category_ids for z in cube.lsg_ids]
    effects_by_cat = {}
    if variant_needs_effects(variant):
        for cat in sorted({k.category_id for k in keys}):
            ci = cube.cat_index(cat)
            agg = _aggregate_from_cube(cube, ci, ctx.rev_fit)
            effects_by_cat[cat] = fit_aggregate(
                agg, delta_trend=config.delta_trend,
                delta_harmonic=config.delta_harmonic,
                delta_regression=ctx.delta_regression, beta=ctx.beta,
                covariates=ctx.cat_active(cat))
    price_by_pair = {}
    if variant_needs_price(variant):
        for key in keys:
            price_by_pair[key] = _fit_pair_price(ctx, key)
    cache = {}
    results = {}
    for key in keys:
        ci = cube.cat_index(key.category_id)
        zi = cube.lsg_index(key.lsg_id)
        structure, filter_cov = _pair_filter_inputs(
            ctx, key, variant, effects_by_cat.get(key.category_id), cache)
        y = ctx.log_rev_fit[ci, zi]
        results[key] = dlm.filter_series(structure, filter_cov, y,
                                         initial_prior=_revenue_prior(structure, y))
    return {"pairs": results, "effects": effects_by_cat, "prices": price_by_pair}


def _study_origins(ctx: _StudyContext) -> np.ndarray:
    cfg = ctx.config
    start = cfg.origin_start if cfg.origin_start is not None else ctx.w_lo + 52
    end = cfg.origin_end if cfg.origin_end is not None else ctx.w_hi
    if start < ctx.w_lo or end > ctx.w_hi or start > end:
        raise ConfigError(
            f"origins [{start}, {end}] outside panel weeks [{ctx.w_lo}, {ctx.w_hi}]")
    return np.arange(start, end + 1)


def _tune_discounts(ctx: _StudyContext, pairs) -> tuple:
    """Grid search (delta_regression, beta) on year-1 one-step MAPE.

    Pools absolute percentage errors of the one-step predictive median
    across every pair over year-1 weeks (after a 13-week burn-in),
    using the baseline structure; ties resolve to the first grid point.
    """
    cube = ctx.cube
    cfg = ctx.config
    W1 = 52
    burn = 13
    best = None
    for dr, b in itertools.product(cfg.tune_grid, cfg.tune_grid):
        ape_sum = 0.0
        ape_n = 0
        cache = {}
        probe = replace(ctx, delta_regression=float(dr), beta=float(b))
        for key in pairs:
            ci = cube.cat_index(key.category_id)
            zi = cube.lsg_index(key.lsg_id)
            structure = _revenue_structure(probe, key.category_id, BASELINE, cache)
            covs = {c: _ffill(cube.covariates[c][ci, zi][:W1])
                    for c in ctx.cat_active(key.category_id)}
            y = ctx.log_rev_fit[ci, zi][:W1]
            fr = dlm.filter_series(structure, covs, y)
            actual = np.exp(y[burn:])
            point = np.exp(fr.f[burn:])
            ok = np.isfinite(actual)
            ape_sum += np.sum(np.abs(actual[ok] - point[ok]) / actual[ok])
            ape_n += int(ok.sum())
        score = ape_sum / max(ape_n, 1)
        if best is None or score < best[0]:
            best = (score, float(dr), float(b))
    return best[1], best[2]


def run_study(panel: Panel, config: StudyConfig, jobs: int = 1) -> StudyResult:
    """Rolling-origin study over every pair and configured variant.

    Each series is filtered once; the posterior at each origin week of
    the evaluation span then yields forecasts for horizons 1..k. Every
    record carries the predictive (location, scale, dof), both point
    forecasts, the 90% interval, and realized/standardized errors
    (NaN where the target week has no observed revenue). Aggregate
    models are fitted once per category and shared by that category's
    LSG-level models; all Monte Carlo draws derive from config.seed, so
    the result is reproducible and independent of pair ordering.
    """
    config.validate()
    if panel.n_weeks < 104:
        raise ConfigError(
            f"study requires at least 104 weeks (2 years), panel has {panel.n_weeks}")
    ctx = _build_context(panel, config)
    cube = ctx.cube
    origins = _study_origins(ctx)
    k = config.horizon
    pairs = [SeriesKey(z, c) for c in cube.category_ids for z in cube.lsg_ids]

    if config.tune:
        dr, b = _tune_discounts(ctx, pairs)
        ctx.delta_regression, ctx.beta = dr, b

    def _map(fn, items):
        if jobs and jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                return list(ex.map(fn, items))
        return [fn(it) for it in items]

    effects_by_cat = {}
    if any(variant_needs_effects(v) for v in config.variants):
        def _fit_cat(item):
            ci, cat = item
            agg = _aggregate_from_cube(cube, ci, ctx.rev_fit)
            return fit_aggregate(
                agg, delta_trend=config.delta_trend, delta_harmonic=config.delta_harmonic,
                delta_regression=ctx.delta_regression, beta=ctx.beta,
                covariates=ctx.cat_active(cat))
        cats = list(enumerate(cube.category_ids))
        for (ci, cat), eff in zip(cats, _map(_fit_cat, cats)):
            effects_by_cat[cat] = eff

    price_by_pair = {}
    if any(variant_needs_price(v) for v in config.variants):
        fitted = _map(lambda key: _fit_pair_price(ctx, key), pairs)
        price_by_pair = {key: pm for key, pm in zip(pairs, fitted)}

    structure_cache = {}
    chunks = []
    O = origins.size
    o_idx = origins - ctx.w_lo
    steps = np.arange(1, k + 1)
    t_idx = o_idx[:, None] + steps[None, :]
    in_range = t_idx <= (ctx.w_hi - ctx.w_lo)
    t_clip = np.minimum(t_idx, ctx.w_hi - ctx.w_lo)

    def _run_pair(key: SeriesKey):
        ci = cube.cat_index(key.category_id)
        zi = cube.lsg_index(key.lsg_id)
        actual = np.where(in_range, ctx.rev_eval[ci, zi][t_clip], np.nan)
        out = []
        for variant in config.variants:
            loc, scale, dof = _pair_variant_forecasts(
                ctx, key, variant, origins,
                effects_by_cat.get(key.category_id), price_by_pair.get(key),
                structure_cache)
            out.append({
                "origin": np.repeat(origins, k),
                "lsg_id": key.lsg_id, "category_id": key.category_id,
                "variant": variant,
                "horizon": np.tile(steps, O),
                "location": loc.ravel(), "scale": scale.ravel(),
                "dof": np.repeat(dof, k), "actual": actual.ravel(),
            })
        return out

    for result in _map(_run_pair, pairs):
        chunks.extend(result)

    n_rows = sum(c["location"].size for c in chunks)
    cols = {}
    for name in ("origin", "horizon", "location", "scale", "dof", "actual"):
        cols[name] = np.concatenate([c[name] for c in chunks])
    for name in ("lsg_id", "category_id", "variant"):
        cols[name] = np.concatenate(
            [np.full(c["location"].size, c[name], dtype=object) for c in chunks])

    cache = TiltedDrawCache(config.seed, config.mc_samples)
    point = batch_point_mape_optimal(cols["location"], cols["scale"], cols["dof"], cache)
    sd = np.sqrt(cols["scale"])
    uniq, inv = np.unique(cols["dof"], return_inverse=True)
    tq = stats.t.ppf(0.95, uniq)[inv]
    with np.errstate(invalid="ignore"):
        log_actual = np.log(cols["actual"])
    frame = pd.DataFrame({
        "origin": cols["origin"].astype(np.int64),
        "lsg_id": cols["lsg_id"], "category_id": cols["category_id"],
        "variant": cols["variant"],
        "horizon": cols["horizon"].astype(np.int64),
        "location": cols["location"], "scale": cols["scale"], "dof": cols["dof"],
        "point_mape_opt": point,
        "point_median": np.exp(cols["location"]),
        "lo90": np.exp(cols["location"] - tq * sd),
        "hi90": np.exp(cols["location"] + tq * sd),
        "actual": cols["actual"],
        "error": cols["actual"] - point,
        "std_error": (log_actual - cols["location"]) / sd,
    })
    frame = frame.sort_values(["lsg_id", "category_id", "variant", "origin", "horizon"],
                              kind="mergesort").reset_index(drop=True)
    assert len(frame) == n_rows
    return StudyResult(records=frame, horizon=k, variants=tuple(config.variants),
                       origins=tuple(origins.tolist()))


def forecast_pair(key: SeriesKey, variant: str, origin_t: int, k: int, panel: Panel,
                  effects: EffectTrajectory | None = None,
                  price_model: PriceModel | None = None,
                  config: StudyConfig | None = None) -> list:
    """Forecast horizons 1..k for one pair and variant from one origin.

    Requires the prerequisites of the variant: an effect trajectory for
    MS/MS_NET, a fitted price model for NET/MS_NET.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if variant_needs_effects(variant) and effects is None:
        raise ConfigError(f"variant {variant} requires an effect trajectory")
    if variant_needs_price(variant) and price_model is None:
        raise ConfigError(f"variant {variant} requires a fitted price model")
    cfg = config or StudyConfig(variants=(variant,), horizon=k)
    cfg = replace(cfg, horizon=k)
    ctx = _build_context(panel, cfg)
    if key.category_id not in ctx.cube.category_ids or key.lsg_id not in ctx.cube.lsg_ids:
        raise DataError(f"series {key} not present in panel")
    origins = np.array([origin_t])
    if not ctx.w_lo <= origin_t <= ctx.w_hi:
        raise ConfigError(f"origin {origin_t} outside panel weeks")
    loc, scale, dof = _pair_variant_forecasts(ctx, key, variant, origins,
                                              effects, price_model, {})
    return [
        dlm.ForecastDistribution(origin_t=origin_t, horizon_k=j + 1,
                                 location=float(loc[0, j]), scale=float(scale[0, j]),
                                 dof=float(dof[0]))
        for j in range(k)
    ]


def forecast_pair_samples(key: SeriesKey, variant: str, origin_t: int, k: int,
                          panel: Panel, effects: EffectTrajectory,
                          price_model: PriceModel | None = None,
                          config: StudyConfig | None = None,
                          n_effect_draws: int = 100, mc_per_draw: int = 50,
                          seed: int = 0) -> np.ndarray:
    """Pooled forecast samples that propagate effect uncertainty.

    Instead of plugging in the aggregate posterior mean, draws effect
    vectors from the aggregate posterior at the origin, reruns the
    forecast under each draw, and pools Student-t samples across draws.
    Returns a (k, n_effect_draws * mc_per_draw) array of log-revenue
    samples.
    """
    if not variant_needs_effects(variant):
        raise ConfigError("pooled sampling is defined for the multi-scale variants")
    if effects.filter_result is None:
        raise ConfigError("effect trajectory must retain its filter result")
    cfg = config or StudyConfig(variants=(variant,), horizon=k)
    cfg = replace(cfg, horizon=k)
    ctx = _build_context(panel, cfg)
    origins = np.array([origin_t])
    rng = np.random.default_rng(seed)

    w_idx = int(np.searchsorted(effects.weeks, origin_t))
    agg_post = effects.filter_result.posterior_at(w_idx)
    n_cov = len(effects.covariates)
    reg0 = agg_post.m.shape[0] - n_cov
    states = dlm.sample_states(agg_post, n_effect_draws,
                               int(rng.integers(0, 2**63 - 1)))
    theta = states[:, reg0:]

    out = np.empty((k, n_effect_draws * mc_per_draw))
    cache = {}
    for i in range(n_effect_draws):
        loc, scale, dof = _pair_variant_forecasts(
            ctx, key, variant, origins, effects, price_model, cache,
            frozen_effects=theta[i][None, :])
        z = rng.standard_t(float(dof[0]), (k, mc_per_draw))
        out[:, i * mc_per_draw:(i + 1) * mc_per_draw] = (
            loc[0][:, None] + np.sqrt(scale[0])[:, None] * z)
    return out
