"""Point-forecast rules, accuracy metrics, and dependence diagnostics.

Point forecasts target MAPE: the minimizer of expected absolute
percentage error under a predictive distribution is the 1/y-weighted
median, computed here from Monte Carlo samples of the revenue-space
predictive. Accuracy summaries support holiday masking, and
cross-category dependence is screened by correlating standardized
forecast errors with another category's discount series.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError, DimensionError, ParameterError

MIN_MC_SAMPLES = 1000


def _tilted_pick(z_sorted: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Index of the 1/y-weighted median among sorted standard draws.

    For samples y_i = exp(loc + c * z_i), the weights 1/y_i are
    proportional to exp(-c * z_i); the location factor cancels in the
    normalization, so the pick depends only on c = sqrt(scale) and the
    sorted draws. Exponents are shifted by their maximum (at the
    smallest draw) for stability.
    """
    logw = -c[:, None] * (z_sorted[None, :] - z_sorted[0])
    w = np.exp(logw)
    cw = np.cumsum(w, axis=1)
    return np.argmax(cw >= 0.5 * cw[:, -1:], axis=1)


def point_mape_optimal(dist, mc_samples: int, seed: int) -> float:
    """MAPE-optimal point forecast in revenue space.

    Draws `mc_samples` revenue samples exp(location + sqrt(scale) * t_dof)
    and returns the weighted median with weights 1/y: sort ascending,
    accumulate normalized weights, return the first sample whose
    cumulative weight reaches 0.5.
    """
    if mc_samples < MIN_MC_SAMPLES:
        raise ParameterError(f"mc_samples must be >= {MIN_MC_SAMPLES}, got {mc_samples}")
    rng = np.random.default_rng(seed)
    z = np.sort(rng.standard_t(dist.dof, mc_samples))
    c = np.sqrt(dist.scale)
    idx = _tilted_pick(z, np.array([c]))[0]
    return float(np.exp(dist.location + c * z[idx]))


class TiltedDrawCache:
    """Shared sorted Student-t draws keyed by degrees of freedom.

    Batch studies reuse one sorted draw vector per distinct dof, seeded
    from (master_seed, dof bit pattern, size), so results are identical
    regardless of the order in which series are processed.
    """

    def __init__(self, master_seed: int, size: int = MIN_MC_SAMPLES):
        if size < MIN_MC_SAMPLES:
            raise ParameterError(f"cache size must be >= {MIN_MC_SAMPLES}, got {size}")
        self.master_seed = int(master_seed)
        self.size = int(size)
        self._draws = {}

    def sorted_draws(self, dof: float) -> np.ndarray:
        bits = int.from_bytes(np.float64(dof).tobytes(), "little")
        z = self._draws.get(bits)
        if z is None:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.master_seed, bits, self.size]))
            z = np.sort(rng.standard_t(dof, self.size))
            self._draws[bits] = z
        return z


def batch_point_mape_optimal(location, scale, dof, cache: TiltedDrawCache,
                             chunk: int = 8192) -> np.ndarray:
    """Vectorized MAPE-optimal points for many forecasts at once.

    Records are grouped by dof so each group shares one sorted draw
    vector from the cache (common random numbers across records).
    """
    loc = np.asarray(location, dtype=float)
    c = np.sqrt(np.asarray(scale, dtype=float))
    dof = np.asarray(dof, dtype=float)
    out = np.empty(loc.shape[0])
    uniq, inv = np.unique(dof, return_inverse=True)
    for u_idx, u in enumerate(uniq):
        sel = np.flatnonzero(inv == u_idx)
        z = cache.sorted_draws(float(u))
        for start in range(0, sel.size, chunk):
            rows = sel[start:start + chunk]
            picks = _tilted_pick(z, c[rows])
            out[rows] = np.exp(loc[rows] + c[rows] * z[picks])
    return out


def mape(points, actuals, mask=None) -> float:
    """Mean absolute percentage error over unmasked positions.

    mask entries set to True are excluded from the summary.
    """
    p = np.asarray(points, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape:
        raise DimensionError(f"points shape {p.shape} != actuals shape {a.shape}")
    if mask is None:
        keep = np.ones(p.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != p.shape:
            raise DimensionError(f"mask shape {m.shape} != points shape {p.shape}")
        keep = ~m
    if not keep.any():
        raise DataError("every position is masked; nothing to evaluate")
    if not (a[keep] > 0).all():
        raise DataError("actuals must be positive at unmasked positions")
    return float(np.mean(100.0 * np.abs(a[keep] - p[keep]) / a[keep]))


def coverage(lo, hi, actuals, level: float = 0.90) -> float:
    """Fraction of actuals falling inside [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if not (lo.shape == hi.shape == a.shape):
        raise DimensionError(
            f"length mismatch: lo {lo.shape}, hi {hi.shape}, actuals {a.shape}")
    if (lo > hi).any():
        raise DataError("interval bounds must satisfy lo <= hi")
    return float(np.mean((a >= lo) & (a <= hi)))


@dataclass(frozen=True)
class AccuracyRecord:
    """Accuracy summary for one (series, variant, horizon) cell."""

    lsg_id: str
    category_id: str
    variant: str
    horizon: int
    mape: float
    masked_mape: float
    coverage90: float
    n_evaluated: int


def accuracy_table(records: pd.DataFrame, holiday_weeks=(), horizons=None) -> pd.DataFrame:
    """Per-(series, variant, horizon) accuracy from study records.

    `records` is a StudyResult frame; rows whose actual is missing are
    never evaluated. masked_mape additionally drops rows whose target
    week (origin + horizon) is in `holiday_weeks`; it is NaN when the
    mask removes everything.
    """
    df = records
    if horizons is not None:
        df = df[df["horizon"].isin(list(horizons))]
    hset = set(int(w) for w in holiday_weeks)
    rows = []
    keys = ["lsg_id", "category_id", "variant", "horizon"]
    for key_vals, grp in df.groupby(keys, sort=True):
        ok = np.isfinite(grp["actual"].to_numpy())
        if not ok.any():
            continue
        g = grp[ok]
        actual = g["actual"].to_numpy()
        point = g["point_mape_opt"].to_numpy()
        target = g["origin"].to_numpy() + g["horizon"].to_numpy()
        unmasked = mape(point, actual)
        keep = ~np.isin(target, list(hset)) if hset else np.ones(len(g), dtype=bool)
        masked = mape(point[keep], actual[keep]) if keep.any() else float("nan")
        cov = coverage(g["lo90"].to_numpy(), g["hi90"].to_numpy(), actual)
        rows.append((*key_vals, unmasked, masked, cov, int(ok.sum())))
    return pd.DataFrame(rows, columns=keys + ["mape", "masked_mape", "coverage90",
                                              "n_evaluated"])


def compare_models(a: pd.DataFrame, b: pd.DataFrame, metric: str = "mape") -> dict:
    """Pairwise accuracy comparison between two model variants.

    Both inputs are accuracy tables restricted to one variant and one
    horizon, with identical (lsg_id, category_id) key sets. Returns the
    scatter-ready per-pair table and the fraction of pairs where b is
    strictly better (ties count as not improved).
    """
    keys = ["lsg_id", "category_id"]
    a_keys = set(map(tuple, a[keys].to_numpy()))
    b_keys = set(map(tuple, b[keys].to_numpy()))
    if a_keys != b_keys:
        raise DataError(
            f"key sets differ: {len(a_keys - b_keys)} only in a, {len(b_keys - a_keys)} only in b")
    merged = a[keys + [metric]].merge(b[keys + [metric]], on=keys,
                                      suffixes=("_a", "_b"), validate="1:1")
    merged = merged.sort_values(keys).reset_index(drop=True)
    merged["delta"] = merged[f"{metric}_b"] - merged[f"{metric}_a"]
    frac = float(np.mean(merged[f"{metric}_b"].to_numpy()
                         < merged[f"{metric}_a"].to_numpy()))
    return {"pairs": merged, "fraction_improved": frac}


@dataclass(frozen=True)
class CrossCatMatrix:
    """Correlation between per-category series, averaged over LSGs.

    entries[i, j] is the mean over LSGs of the Pearson correlation
    between category i's left-hand series (forecast errors, or any
    per-week values) and category j's right-hand series (TPR%).
    per_lsg holds the underlying per-LSG matrices; cells with fewer
    than 3 paired weeks or a constant series are NaN and excluded
    from the average.
    """

    category_order: tuple
    lsg_order: tuple
    entries: np.ndarray      # (ncat, ncat)
    per_lsg: np.ndarray      # (nlsg, ncat, ncat)
    lsg_counts: np.ndarray   # (ncat, ncat) LSGs contributing to each cell
    averaging: str = "mean-over-LSGs"


def cross_category_correlation(left: pd.DataFrame, right: pd.DataFrame) -> CrossCatMatrix:
    """Correlate per-category weekly series across categories, per LSG.

    Both frames carry columns (lsg_id, category_id, week, value); rows
    with NaN values are ignored pairwise. Entry (i, j) correlates
    category i's `left` values with category j's `right` values over
    common weeks within each LSG, then averages across LSGs.
    """
    for name, df in (("left", left), ("right", right)):
        missing = {"lsg_id", "category_id", "week", "value"} - set(df.columns)
        if missing:
            raise DataError(f"{name} frame is missing columns {sorted(missing)}")
    cats = tuple(sorted(set(left["category_id"]).union(right["category_id"])))
    lsgs = tuple(sorted(set(left["lsg_id"]).union(right["lsg_id"])))
    weeks = np.union1d(left["week"].unique(), right["week"].unique())
    wpos = {int(w): i for i, w in enumerate(weeks)}
    cpos = {c: i for i, c in enumerate(cats)}
    zpos = {z: i for i, z in enumerate(lsgs)}

    def dense(df):
        out = np.full((len(lsgs), len(cats), len(weeks)), np.nan)
        zi = df["lsg_id"].map(zpos).to_numpy()
        ci = df["category_id"].map(cpos).to_numpy()
        wi = df["week"].map(wpos).to_numpy()
        out[zi, ci, wi] = df["value"].to_numpy(dtype=float)
        return out

    L = dense(left)
    R = dense(right)
    nc = len(cats)
    per_lsg = np.full((len(lsgs), nc, nc), np.nan)
    for iz in range(len(lsgs)):
        for i in range(nc):
            li = L[iz, i]
            for j in range(nc):
                rj = R[iz, j]
                ok = np.isfinite(li) & np.isfinite(rj)
                if ok.sum() < 3:
                    continue
                x, y = li[ok], rj[ok]
                sx, sy = x.std(), y.std()
                if sx == 0.0 or sy == 0.0:
                    continue
                per_lsg[iz, i, j] = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    counts = np.isfinite(per_lsg).sum(axis=0)
    # nanmean warns on all-NaN cells; NaN is the intended result there
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        entries = np.nanmean(per_lsg, axis=0)
    return CrossCatMatrix(category_order=cats, lsg_order=lsgs, entries=entries,
                          per_lsg=per_lsg, lsg_counts=counts)


def _repr_float(v) -> str:
    return repr(float(v))


def write_accuracy_csv(table: pd.DataFrame, path):
    table.to_csv(path, index=False, float_format=_repr_float)


def write_comparison_csv(comparison: dict, path):
    comparison["pairs"].to_csv(path, index=False, float_format=_repr_float)


def write_crosscat_csv(matrix: CrossCatMatrix, path):
    """Correlation matrix CSV: header row and first column carry category ids."""
    df = pd.DataFrame(matrix.entries, index=list(matrix.category_order),
                      columns=list(matrix.category_order))
    df.index.name = "category_id"
    df.to_csv(path, float_format=_repr_float)


def read_crosscat_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, index_col="category_id", float_precision="round_trip")
