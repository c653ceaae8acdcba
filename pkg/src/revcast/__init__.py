"""Multi-scale retail revenue forecasting with discount-factor DLMs.

The package filters weekly revenue series with conjugate dynamic linear
models whose evolution variance is set by discount factors, shares
category-level discount effects with store-group models through
multi-scale regressors, adds a companion Net Price model, and evaluates
everything with rolling-origin studies, MAPE-optimal point forecasts,
and cross-category dependence screens.
"""

from .data import (
    COVARIATE_COLUMNS,
    PANEL_COLUMNS,
    GroundTruth,
    Panel,
    PanelCube,
    PreprocessReport,
    SynthConfig,
    generate_synthetic,
    parse_panel,
    preprocess,
    read_ground_truth,
    write_ground_truth,
    write_panel,
)
from .dlm import (
    HARMONIC,
    MISSING,
    REGRESSION,
    TREND,
    ComponentBlock,
    FilterResult,
    ForecastDistribution,
    ModelStructure,
    StatePosterior,
    build_component,
    default_initial_prior,
    evolve,
    filter_series,
    forecast_ahead,
    is_missing,
    read_trajectory,
    resolve_F,
    sample_states,
    step_forecast,
    superpose,
    update,
    write_trajectory,
)
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    ParameterError,
    ResolutionError,
    RevcastError,
)
from .evaluation import (
    CrossCatMatrix,
    TiltedDrawCache,
    accuracy_table,
    batch_point_mape_optimal,
    compare_models,
    coverage,
    cross_category_correlation,
    mape,
    point_mape_optimal,
    read_crosscat_csv,
    write_accuracy_csv,
    write_comparison_csv,
    write_crosscat_csv,
)
from .pipeline import (
    BASELINE,
    MS,
    MS_NET,
    NET,
    VARIANTS,
    AggregateSeries,
    EffectTrajectory,
    PriceModel,
    SeriesKey,
    StudyConfig,
    StudyResult,
    aggregate_category,
    build_multiscale_regressors,
    fit_aggregate,
    fit_netprice,
    fit_variant_models,
    forecast_pair,
    forecast_pair_samples,
    price_plugin_path,
    regression_effect,
    run_study,
)

__version__ = "0.1.0"
