"""Panel schema, CSV ingestion, preprocessing, and synthetic data.

A Panel is a rectangular weekly dataset keyed by (week, LSG, Category)
carrying revenue, three discount covariates (percent scale), and the
net/base price pair. Missing revenue is encoded as NaN in memory and as
an empty CSV field on disk; covariates are always present.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import DataError

PANEL_COLUMNS = (
    "week", "lsg_id", "category_id", "revenue",
    "tpr_pct", "adfront_pct", "dspback_pct",
    "net_price", "base_price",
)
COVARIATE_COLUMNS = ("tpr_pct", "adfront_pct", "dspback_pct")

JITTER_TRIGGER_SD = 0.25  # series flatter than this get stabilizing noise


@dataclass(frozen=True)
class PreprocessReport:
    """Record of every covariate drop and jitter action taken."""

    dropped: tuple        # (category_id, covariate) pairs excluded from models
    jittered: tuple       # (lsg_id, category_id, covariate) series that got noise
    negligible_threshold: float
    jitter_sd: float
    seed: int

    def active_covariates(self, category_id) -> tuple:
        gone = {cov for cat, cov in self.dropped if cat == category_id}
        return tuple(c for c in COVARIATE_COLUMNS if c not in gone)


@dataclass(frozen=True)
class Panel:
    """Validated weekly panel; rows sorted by (category, LSG, week)."""

    frame: pd.DataFrame
    report: PreprocessReport | None = None

    @property
    def lsg_ids(self) -> tuple:
        return tuple(sorted(self.frame["lsg_id"].unique()))

    @property
    def category_ids(self) -> tuple:
        return tuple(sorted(self.frame["category_id"].unique()))

    @property
    def week_range(self) -> tuple:
        w = self.frame["week"]
        return int(w.min()), int(w.max())

    @property
    def n_weeks(self) -> int:
        lo, hi = self.week_range
        return hi - lo + 1

    def active_covariates(self, category_id) -> tuple:
        if self.report is None:
            return COVARIATE_COLUMNS
        return self.report.active_covariates(category_id)

    def cube(self) -> "PanelCube":
        return _build_cube(self)


@dataclass(frozen=True)
class PanelCube:
    """Dense (category, LSG, week) arrays for fast pipeline access.

    Weeks absent from a series have NaN everywhere and present=False.
    """

    category_ids: tuple
    lsg_ids: tuple
    weeks: np.ndarray
    revenue: np.ndarray      # (C, Z, W), NaN where missing or absent
    covariates: dict         # name -> (C, Z, W)
    net_price: np.ndarray
    base_price: np.ndarray
    present: np.ndarray      # (C, Z, W) bool: a row exists

    def cat_index(self, category_id) -> int:
        return self.category_ids.index(category_id)

    def lsg_index(self, lsg_id) -> int:
        return self.lsg_ids.index(lsg_id)


def _build_cube(panel: Panel) -> PanelCube:
    df = panel.frame
    cats = panel.category_ids
    lsgs = panel.lsg_ids
    w_lo, w_hi = panel.week_range
    W = w_hi - w_lo + 1
    C, Z = len(cats), len(lsgs)
    cat_pos = {c: i for i, c in enumerate(cats)}
    lsg_pos = {z: i for i, z in enumerate(lsgs)}
    ci = df["category_id"].map(cat_pos).to_numpy()
    zi = df["lsg_id"].map(lsg_pos).to_numpy()
    wi = df["week"].to_numpy() - w_lo

    def dense(col):
        out = np.full((C, Z, W), np.nan)
        out[ci, zi, wi] = df[col].to_numpy(dtype=float)
        return out

    present = np.zeros((C, Z, W), dtype=bool)
    present[ci, zi, wi] = True
    return PanelCube(
        category_ids=tuple(cats), lsg_ids=tuple(lsgs),
        weeks=np.arange(w_lo, w_hi + 1),
        revenue=dense("revenue"),
        covariates={c: dense(c) for c in COVARIATE_COLUMNS},
        net_price=dense("net_price"),
        base_price=dense("base_price"),
        present=present,
    )


def _fail_rows(mask, message):
    if mask.any():
        rows = np.flatnonzero(np.asarray(mask))[:5] + 2  # CSV line numbers incl. header
        raise DataError(f"{message} (rows {', '.join(map(str, rows))})")


def _validate_frame(df: pd.DataFrame) -> pd.DataFrame:
    if tuple(df.columns) != PANEL_COLUMNS:
        raise DataError(
            f"header mismatch: expected {','.join(PANEL_COLUMNS)}, "
            f"got {','.join(map(str, df.columns))}"
        )
    df = df.copy()
    week = pd.to_numeric(df["week"], errors="coerce")
    _fail_rows((week.isna() | (week < 0) | (week % 1 != 0)).to_numpy(),
               "week must be a nonnegative integer")
    df["week"] = week.astype(np.int64)
    for col in ("lsg_id", "category_id"):
        vals = df[col].astype(str)
        bad = vals.str.len().eq(0) | vals.str.contains(r"[,\r\n\"]")
        _fail_rows(bad.to_numpy(), f"{col} must be nonempty and contain no commas or quotes")
        df[col] = vals
    for col in PANEL_COLUMNS[3:]:
        df[col] = pd.to_numeric(df[col], errors="coerce").astype(float)

    rev = df["revenue"].to_numpy()
    _fail_rows(np.isfinite(rev) & (rev <= 0), "revenue must be positive or missing")
    _fail_rows(np.isinf(rev), "revenue must be finite or missing")
    for col in COVARIATE_COLUMNS:
        v = df[col].to_numpy()
        _fail_rows(~np.isfinite(v) | (v < 0) | (v > 100), f"{col} must lie in [0, 100]")
    for col in ("net_price", "base_price"):
        v = df[col].to_numpy()
        _fail_rows(~np.isfinite(v) | (v <= 0), f"{col} must be positive")
    _fail_rows(df["net_price"].to_numpy() > df["base_price"].to_numpy() + 1e-9,
               "net_price cannot exceed base_price")

    dup = df.duplicated(subset=["week", "lsg_id", "category_id"], keep="first")
    _fail_rows(dup.to_numpy(), "duplicate (week, lsg_id, category_id) key")

    for (cat, lsg), grp in df.groupby(["category_id", "lsg_id"], sort=False):
        w = np.sort(grp["week"].to_numpy())
        if not np.array_equal(w, np.arange(w[0], w[0] + w.size)):
            raise DataError(
                f"weeks for series (lsg={lsg}, category={cat}) are not contiguous; "
                "represent gaps as rows with empty revenue"
            )

    df = df.sort_values(["category_id", "lsg_id", "week"], kind="mergesort")
    return df.reset_index(drop=True)


def panel_from_frame(frame: pd.DataFrame) -> Panel:
    """Validate an in-memory frame and wrap it as a Panel."""
    return Panel(frame=_validate_frame(frame))


def parse_panel(path) -> Panel:
    """Read and validate a panel CSV.

    The header must match the documented schema exactly; every invariant
    violation is reported with the offending CSV line numbers.
    """
    with open(path) as fh:
        header = fh.readline().rstrip("\r\n")
    if header != ",".join(PANEL_COLUMNS):
        raise DataError(
            f"header mismatch in {path}: expected {','.join(PANEL_COLUMNS)}, got {header}"
        )
    df = pd.read_csv(path, dtype={"lsg_id": str, "category_id": str},
                     float_precision="round_trip")
    return panel_from_frame(df)


def write_panel(panel: Panel, path):
    """Write a panel CSV; missing revenue becomes an empty field.

    Floats are written with shortest round-trip precision so that
    parse(write(panel)) reproduces every field bitwise.
    """
    panel.frame.to_csv(path, index=False, na_rep="",
                       float_format=lambda v: repr(float(v)))


def preprocess(panel: Panel, negligible_threshold=0.5, jitter_sd=0.1, seed=0) -> tuple:
    """Drop negligible covariates and jitter near-constant ones.

    Per (category, covariate): if the covariate's maximum over all weeks
    and LSGs is below `negligible_threshold`, it is marked dropped (kept
    in the CSV but excluded from model observation vectors). Remaining
    covariate series whose within-series standard deviation falls below
    0.25 get zero-mean Gaussian noise (sd `jitter_sd`, clipped to
    [0, 100]), seeded per series.

    Returns (panel, report). A panel that already carries a report is
    returned unchanged, so the operation is idempotent.
    """
    if panel.report is not None:
        return panel, panel.report
    df = panel.frame.copy()
    dropped = []
    jittered = []
    for cat in panel.category_ids:
        in_cat = df["category_id"] == cat
        for cov in COVARIATE_COLUMNS:
            vals = df.loc[in_cat, cov].to_numpy()
            peak = np.nanmax(vals) if vals.size else 0.0
            if not np.isfinite(peak) or peak < negligible_threshold:
                dropped.append((cat, cov))
    dropped_set = set(dropped)
    for (cat, lsg), grp in df.groupby(["category_id", "lsg_id"], sort=True):
        for k, cov in enumerate(COVARIATE_COLUMNS):
            if (cat, cov) in dropped_set:
                continue
            vals = grp[cov].to_numpy()
            if np.nanstd(vals) < JITTER_TRIGGER_SD:
                rng = np.random.default_rng(np.random.SeedSequence(
                    [seed, zlib.crc32(lsg.encode()), zlib.crc32(cat.encode()), k]
                ))
                noisy = np.clip(vals + rng.normal(0.0, jitter_sd, vals.size), 0.0, 100.0)
                df.loc[grp.index, cov] = noisy
                jittered.append((lsg, cat, cov))
    report = PreprocessReport(
        dropped=tuple(dropped), jittered=tuple(jittered),
        negligible_threshold=float(negligible_threshold),
        jitter_sd=float(jitter_sd), seed=int(seed),
    )
    return Panel(frame=df, report=report), report


# ---------------------------------------------------------------------------
# Synthetic panel generation


DEFAULT_COV_LEVEL_RANGES = {
    "tpr_pct": (0.0, 45.0),
    "adfront_pct": (0.0, 30.0),
    "dspback_pct": (0.0, 25.0),
}
DEFAULT_EFFECT_RANGES = {
    "tpr_pct": (0.012, 0.030),
    "adfront_pct": (0.008, 0.020),
    "dspback_pct": (0.005, 0.015),
}


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic panel generator.

    Discount covariates follow persistent regimes (runs of constant
    level with occasional jumps) shared across LSGs up to small per-LSG
    perturbations. Effects multiply covariates in log-revenue space and
    may follow a mean-reverting path (phi < 1 or innovation sd > 0);
    the defaults keep them constant.
    """

    n_lsg: int = 9
    n_category: int = 20
    n_weeks: int = 104
    seed: int = 0
    lsg_scales: tuple | None = None          # revenue multipliers, len n_lsg
    noise_sds: tuple | float = 0.1           # log-revenue noise per LSG
    effects: tuple | None = None             # per category: (tpr, adfront, dspback)
    seasonal_amplitude: float = 0.15
    holiday_weeks: tuple = ()
    holiday_multipliers: tuple | float = 1.6
    cross_effects: tuple = ()                # (source_cat_index, target_cat_index, coef)
    effect_ar_phi: float = 1.0
    effect_innovation_sd: float = 0.0
    cov_level_ranges: Mapping = field(default_factory=lambda: dict(DEFAULT_COV_LEVEL_RANGES))
    effect_ranges: Mapping = field(default_factory=lambda: dict(DEFAULT_EFFECT_RANGES))
    regime_change_prob: float = 1.0 / 6.0
    regime_zero_prob: float = 0.35
    lsg_discount_jitter_sd: float = 0.5
    category_level_range: tuple = (3.0, 5.0)
    base_price_range: tuple = (2.0, 8.0)
    price_gamma_range: tuple = (0.3, 0.8)
    price_noise_sd: float = 0.01

    def lsg_scale_list(self):
        if self.lsg_scales is None:
            return tuple(1.0 for _ in range(self.n_lsg))
        if len(self.lsg_scales) != self.n_lsg:
            raise DataError("lsg_scales length must equal n_lsg")
        return tuple(float(v) for v in self.lsg_scales)

    def noise_sd_list(self):
        if np.isscalar(self.noise_sds):
            return tuple(float(self.noise_sds) for _ in range(self.n_lsg))
        if len(self.noise_sds) != self.n_lsg:
            raise DataError("noise_sds length must equal n_lsg")
        return tuple(float(v) for v in self.noise_sds)

    def holiday_multiplier_list(self):
        if np.isscalar(self.holiday_multipliers):
            return tuple(float(self.holiday_multipliers) for _ in self.holiday_weeks)
        if len(self.holiday_multipliers) != len(self.holiday_weeks):
            raise DataError("holiday_multipliers length must match holiday_weeks")
        return tuple(float(v) for v in self.holiday_multipliers)


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator knows that a model must discover."""

    category_ids: tuple
    lsg_ids: tuple
    effect_paths: dict          # (category_id, covariate) -> (T,) true effect path
    category_levels: dict       # category_id -> log level
    seasonal: dict              # category_id -> (amplitude, phase)
    lsg_scales: dict            # lsg_id -> multiplier
    noise_sds: dict             # lsg_id -> log noise sd
    cross_effects: tuple        # (source_cat_id, target_cat_id, coef)
    holiday_weeks: tuple
    holiday_multipliers: tuple
    price_gamma: dict           # category_id -> discount-to-price slope
    base_price: dict            # category_id -> undiscounted price


def _regime_path(rng, T, lo, hi, change_prob, zero_prob):
    # Persistent level with occasional jumps; some regimes sit at zero.
    out = np.empty(T)
    level = 0.0 if rng.uniform() < zero_prob else rng.uniform(lo, hi)
    for t in range(T):
        if t > 0 and rng.uniform() < change_prob:
            level = 0.0 if rng.uniform() < zero_prob else rng.uniform(lo, hi)
        out[t] = level
    return out


def generate_synthetic(config: SynthConfig) -> tuple:
    """Generate a Panel and its GroundTruth, deterministically per seed.

    Log revenue is built as LSG scale + category level + seasonal
    harmonic + discount-effect terms + cross-category terms + holiday
    spikes + Gaussian noise; prices follow the discount depth.
    """
    rng = np.random.default_rng(config.seed)
    T = int(config.n_weeks)
    cats = tuple(f"C{i + 1:03d}" for i in range(config.n_category))
    lsgs = tuple(f"L{i + 1:02d}" for i in range(config.n_lsg))
    scales = config.lsg_scale_list()
    noises = config.noise_sd_list()
    hweeks = tuple(int(w) for w in config.holiday_weeks)
    hmults = config.holiday_multiplier_list()
    for w in hweeks:
        if not 0 <= w < T:
            raise DataError(f"holiday week {w} outside 0..{T - 1}")

    levels = {c: rng.uniform(*config.category_level_range) for c in cats}
    seasonal = {c: (float(config.seasonal_amplitude), rng.uniform(0.0, 2.0 * np.pi))
                for c in cats}
    base_price = {c: rng.uniform(*config.base_price_range) for c in cats}
    gammas = {c: rng.uniform(*config.price_gamma_range) for c in cats}

    effect_paths = {}
    for ic, c in enumerate(cats):
        for k, cov in enumerate(COVARIATE_COLUMNS):
            if config.effects is not None:
                mu = float(config.effects[ic][k])
            else:
                mu = rng.uniform(*config.effect_ranges[cov])
            path = np.full(T, mu)
            if config.effect_ar_phi < 1.0 or config.effect_innovation_sd > 0.0:
                e = mu
                for t in range(T):
                    if t > 0:
                        e = mu + config.effect_ar_phi * (e - mu) + rng.normal(
                            0.0, config.effect_innovation_sd)
                    path[t] = e
            effect_paths[(c, cov)] = path

    # Shared regime paths per (category, covariate), then per-LSG copies.
    shared = {
        (c, cov): _regime_path(rng, T, *config.cov_level_ranges[cov],
                               config.regime_change_prob, config.regime_zero_prob)
        for c in cats for cov in COVARIATE_COLUMNS
    }
    X = {}
    for c in cats:
        for cov in COVARIATE_COLUMNS:
            base = shared[(c, cov)]
            for z in lsgs:
                noise = rng.normal(0.0, config.lsg_discount_jitter_sd, T)
                vals = np.where(base > 0.0, np.clip(base + noise, 0.0, 100.0), 0.0)
                X[(c, cov, z)] = vals

    holiday_log = np.zeros(T)
    for w, mlt in zip(hweeks, hmults):
        holiday_log[w] += np.log(mlt)

    cross = tuple((cats[si], cats[ti], float(coef))
                  for si, ti, coef in config.cross_effects)

    weeks = np.arange(T)
    rows = {col: [] for col in PANEL_COLUMNS}
    for ic, c in enumerate(cats):
        amp, phase = seasonal[c]
        season = amp * np.sin(2.0 * np.pi * weeks / 52.0 + phase)
        for iz, z in enumerate(lsgs):
            log_rev = levels[c] + np.log(scales[iz]) + season + holiday_log.copy()
            for cov in COVARIATE_COLUMNS:
                log_rev = log_rev + effect_paths[(c, cov)] * X[(c, cov, z)]
            for (src, tgt, coef) in cross:
                if tgt == c:
                    log_rev = log_rev + coef * X[(src, "tpr_pct", z)]
            log_rev = log_rev + rng.normal(0.0, noises[iz], T)
            tpr = X[(c, "tpr_pct", z)]
            price_noise = rng.normal(0.0, config.price_noise_sd, T)
            net = base_price[c] * (1.0 - gammas[c] * tpr / 100.0) * np.exp(price_noise)
            net = np.clip(net, 0.05 * base_price[c], base_price[c])
            rows["week"].append(weeks)
            rows["lsg_id"].append(np.full(T, z, dtype=object))
            rows["category_id"].append(np.full(T, c, dtype=object))
            rows["revenue"].append(np.exp(log_rev))
            rows["tpr_pct"].append(tpr)
            rows["adfront_pct"].append(X[(c, "adfront_pct", z)])
            rows["dspback_pct"].append(X[(c, "dspback_pct", z)])
            rows["net_price"].append(net)
            rows["base_price"].append(np.full(T, base_price[c]))
    frame = pd.DataFrame({col: np.concatenate(vals) for col, vals in rows.items()})

    truth = GroundTruth(
        category_ids=cats, lsg_ids=lsgs,
        effect_paths=effect_paths,
        category_levels=levels, seasonal=seasonal,
        lsg_scales={z: scales[i] for i, z in enumerate(lsgs)},
        noise_sds={z: noises[i] for i, z in enumerate(lsgs)},
        cross_effects=cross,
        holiday_weeks=hweeks, holiday_multipliers=hmults,
        price_gamma=gammas, base_price=base_price,
    )
    return panel_from_frame(frame), truth


def write_ground_truth(truth: GroundTruth, path):
    """Persist ground truth as one long-format CSV for test assertions."""
    recs = []
    for (cat, cov), path_vals in sorted(truth.effect_paths.items()):
        for w, v in enumerate(path_vals):
            recs.append(("effect", cat, "", cov, w, v))
    for cat, lvl in sorted(truth.category_levels.items()):
        recs.append(("category_level", cat, "", "", "", lvl))
    for cat, (amp, phase) in sorted(truth.seasonal.items()):
        recs.append(("seasonal_amplitude", cat, "", "", "", amp))
        recs.append(("seasonal_phase", cat, "", "", "", phase))
    for z, v in sorted(truth.lsg_scales.items()):
        recs.append(("lsg_scale", "", z, "", "", v))
    for z, v in sorted(truth.noise_sds.items()):
        recs.append(("noise_sd", "", z, "", "", v))
    for src, tgt, coef in truth.cross_effects:
        recs.append(("cross_effect", f"{src}->{tgt}", "", "tpr_pct", "", coef))
    for w, mlt in zip(truth.holiday_weeks, truth.holiday_multipliers):
        recs.append(("holiday_multiplier", "", "", "", w, mlt))
    for cat, v in sorted(truth.price_gamma.items()):
        recs.append(("price_gamma", cat, "", "", "", v))
    for cat, v in sorted(truth.base_price.items()):
        recs.append(("base_price", cat, "", "", "", v))
    df = pd.DataFrame(recs, columns=["quantity", "category_id", "lsg_id",
                                     "covariate", "week", "value"])
    df.to_csv(path, index=False, float_format=lambda v: repr(float(v)))


def read_ground_truth(path) -> pd.DataFrame:
    """Read a ground-truth CSV back as a long-format frame."""
    return pd.read_csv(path, dtype={"category_id": str, "lsg_id": str,
                                    "covariate": str}, keep_default_na=False,
                       na_values=[""], float_precision="round_trip")
