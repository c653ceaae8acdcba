"""Discount-factor dynamic linear models for univariate weekly series.

The observation at week t is modeled as

    y_t = F_t' theta_t + nu_t,        nu_t ~ N(0, v_t)
    theta_t = G theta_{t-1} + omega_t

where the state evolution noise is never materialized: each component
block discounts its own slice of the state covariance, and the
observational variance v_t is learned conjugately with its own discount.
Models are assembled from trend, harmonic, and regression blocks; the
posterior after each week is a normal-inverse-gamma summary (m, C, n, s)
with C expressed on the scale of s, so the one-step predictive is
Student-t with scale F'RF + s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, DimensionError, ParameterError, ResolutionError

TREND = "trend"
HARMONIC = "harmonic"
REGRESSION = "regression"

MISSING = float("nan")

_EIG_FLOOR = -1e-10  # relative to trace; see StatePosterior.validate


def is_missing(y) -> bool:
    """True when an observation should be skipped by the filter."""
    return y is None or (isinstance(y, float) and np.isnan(y)) or (
        np.isscalar(y) and np.isnan(float(y))
    )


@dataclass(frozen=True)
class ComponentBlock:
    """One building block of a model: trend, harmonic, or regression.

    F_template entries are either constants (floats) or covariate names
    (strings) resolved against a table at filtering/forecasting time.
    """

    kind: str
    dimension: int
    F_template: tuple
    G_block: np.ndarray
    delta: float


def build_component(kind, *, period=None, covariate_names=None, delta=1.0):
    """Construct a ComponentBlock of the requested kind.

    Parameters
    ----------
    kind : str
        "trend", "harmonic", or "regression".
    period : int, optional
        Cycle length in weeks; required for harmonic blocks (>= 2).
    covariate_names : sequence of str, optional
        Required for regression blocks; one state entry per name.
    delta : float
        State discount factor in (0, 1].
    """
    if not (isinstance(delta, (int, float)) and 0.0 < float(delta) <= 1.0):
        raise ParameterError(f"delta must lie in (0, 1], got {delta!r}")
    delta = float(delta)
    if kind == TREND:
        return ComponentBlock(TREND, 1, (1.0,), np.array([[1.0]]), delta)
    if kind == HARMONIC:
        if period is None or int(period) < 2 or int(period) != period:
            raise ParameterError(f"harmonic period must be an integer >= 2, got {period!r}")
        w = 2.0 * np.pi / int(period)
        G = np.array([[np.cos(w), np.sin(w)], [-np.sin(w), np.cos(w)]])
        return ComponentBlock(HARMONIC, 2, (1.0, 0.0), G, delta)
    if kind == REGRESSION:
        names = tuple(covariate_names or ())
        if not names:
            raise ParameterError("regression block requires at least one covariate name")
        if len(set(names)) != len(names):
            raise ParameterError(f"duplicate covariate names within a block: {names}")
        return ComponentBlock(REGRESSION, len(names), names, np.eye(len(names)), delta)
    raise ParameterError(f"unknown component kind {kind!r}")


@dataclass(frozen=True)
class ModelStructure:
    """Superposition of component blocks into one state-space model."""

    blocks: tuple
    total_dimension: int
    variance_discount: float
    # Derived, cached at construction:
    G: np.ndarray = field(repr=False, default=None)
    discount_divisor: np.ndarray = field(repr=False, default=None)
    F_base: np.ndarray = field(repr=False, default=None)
    named_entries: tuple = field(repr=False, default=())
    covariate_names: tuple = ()


def superpose(blocks, variance_discount=1.0) -> ModelStructure:
    """Assemble blocks into a block-diagonal model structure.

    The full G is block-diagonal in the given order; the observation
    vector is the concatenation of the blocks' F templates. Each block's
    slice of the evolved covariance is divided by that block's delta;
    cross-block covariances are carried through undiscounted, which is
    the additive block-diagonal form of discount evolution and preserves
    positive semidefiniteness.
    """
    blocks = tuple(blocks)
    if not blocks:
        raise ParameterError("superpose requires at least one block")
    if not 0.0 < float(variance_discount) <= 1.0:
        raise ParameterError(
            f"variance_discount must lie in (0, 1], got {variance_discount!r}"
        )
    dim = sum(b.dimension for b in blocks)
    G = np.zeros((dim, dim))
    div = np.ones((dim, dim))
    F_base = np.zeros(dim)
    named = []
    names = []
    pos = 0
    for b in blocks:
        sl = slice(pos, pos + b.dimension)
        G[sl, sl] = b.G_block
        div[sl, sl] = b.delta
        for j, entry in enumerate(b.F_template):
            if isinstance(entry, str):
                named.append((pos + j, entry))
                names.append(entry)
            else:
                F_base[pos + j] = float(entry)
        pos += b.dimension
    if len(set(names)) != len(names):
        raise ParameterError(f"covariate names collide across blocks: {names}")
    return ModelStructure(
        blocks=blocks,
        total_dimension=dim,
        variance_discount=float(variance_discount),
        G=G,
        discount_divisor=div,
        F_base=F_base,
        named_entries=tuple(named),
        covariate_names=tuple(names),
    )


def resolve_F(structure: ModelStructure, row: Mapping[str, float]) -> np.ndarray:
    """Resolve one observation vector from named covariate values."""
    F = structure.F_base.copy()
    for idx, name in structure.named_entries:
        try:
            F[idx] = row[name]
        except KeyError:
            raise ResolutionError(f"covariate {name!r} not found in table") from None
    return F


def resolve_F_table(structure: ModelStructure, table: Mapping[str, Sequence], n_weeks: int) -> np.ndarray:
    """Resolve a (n_weeks, dimension) matrix of observation vectors."""
    Fmat = np.tile(structure.F_base, (n_weeks, 1))
    for idx, name in structure.named_entries:
        try:
            col = np.asarray(table[name], dtype=float)
        except KeyError:
            raise ResolutionError(f"covariate {name!r} not found in table") from None
        if col.shape[0] < n_weeks:
            raise DimensionError(
                f"covariate {name!r} has {col.shape[0]} weeks, needs {n_weeks}"
            )
        Fmat[:, idx] = col[:n_weeks]
    return Fmat


@dataclass(frozen=True)
class StatePosterior:
    """Conjugate posterior summary at one week.

    m is the state mean, C the state scale matrix expressed on the scale
    of s (the one-step predictive scale is F'CF + s), n the degrees of
    freedom of the variance estimate s.
    """

    t: int
    m: np.ndarray
    C: np.ndarray
    n: float
    s: float

    def validate(self):
        if not (self.n > 0 and self.s > 0):
            raise ParameterError(f"posterior requires n > 0 and s > 0, got n={self.n}, s={self.s}")
        if not np.allclose(self.C, self.C.T, atol=1e-8):
            raise ParameterError("posterior covariance must be symmetric")
        w = np.linalg.eigvalsh(self.C)
        floor = _EIG_FLOOR * max(np.trace(self.C), 1e-300)
        if w.min() < floor:
            raise ParameterError(f"posterior covariance not PSD: min eigenvalue {w.min()}")


@dataclass(frozen=True)
class ForecastDistribution:
    """Student-t predictive for one future week, in log-revenue space."""

    origin_t: int
    horizon_k: int
    location: float
    scale: float
    dof: float


def default_initial_prior(structure: ModelStructure, observations) -> StatePosterior:
    """Weakly informative data-anchored prior.

    The trend entry starts at the mean of the first 4 observed values;
    s0 is the sample variance of the first 8 observed values (floored at
    1e-4), C0 = s0 * I, n0 = 5.
    """
    y = np.asarray(observations, dtype=float)
    seen = y[np.isfinite(y)]
    m0 = np.zeros(structure.total_dimension)
    pos = 0
    for b in structure.blocks:
        if b.kind == TREND:
            if seen.size:
                m0[pos] = float(np.mean(seen[:4]))
            break
        pos += b.dimension
    if seen.size >= 2:
        s0 = max(float(np.var(seen[:8], ddof=1)), 1e-4)
    else:
        s0 = 1e-4
    C0 = s0 * np.eye(structure.total_dimension)
    return StatePosterior(t=-1, m=m0, C=C0, n=5.0, s=s0)


def _evolve_arrays(m, C, n, s, G, div, beta):
    a = G @ m
    R = (G @ C @ G.T) / div
    R = (R + R.T) * 0.5
    return a, R, n * beta, s


def _update_arrays(a, R, n, s, F, y):
    Rf = R @ F
    f = float(F @ a)
    q = float(F @ Rf) + s
    e = y - f
    A = Rf / q
    n_new = n + 1.0
    s_new = s * (n + e * e / q) / n_new
    m = a + A * e
    C = (s_new / s) * (R - np.outer(A, A) * q)
    C = (C + C.T) * 0.5
    return m, C, n_new, s_new, f, q


def evolve(posterior: StatePosterior, structure: ModelStructure) -> StatePosterior:
    """Advance the posterior one week: discount-inflated prior at t+1.

    The degrees of freedom are discounted here (n <- beta * n); s is
    carried forward unchanged.
    """
    a, R, n, s = _evolve_arrays(
        posterior.m, posterior.C, posterior.n, posterior.s,
        structure.G, structure.discount_divisor, structure.variance_discount,
    )
    return StatePosterior(t=posterior.t + 1, m=a, C=R, n=n, s=s)


def step_forecast(prior: StatePosterior, F) -> ForecastDistribution:
    """One-step predictive from an evolved (prior) state."""
    F = np.asarray(F, dtype=float)
    if F.shape != prior.m.shape:
        raise DimensionError(
            f"F has shape {F.shape}, state dimension is {prior.m.shape[0]}"
        )
    f = float(F @ prior.m)
    q = float(F @ (prior.C @ F)) + prior.s
    return ForecastDistribution(
        origin_t=prior.t - 1, horizon_k=1, location=f, scale=q, dof=prior.n
    )


def update(prior: StatePosterior, F, y) -> StatePosterior:
    """Absorb one observation; a missing y returns the prior unchanged."""
    if is_missing(y):
        return prior
    y = float(y)
    if not np.isfinite(y):
        raise DataError(f"observation must be finite or missing, got {y!r}")
    F = np.asarray(F, dtype=float)
    if F.shape != prior.m.shape:
        raise DimensionError(
            f"F has shape {F.shape}, state dimension is {prior.m.shape[0]}"
        )
    m, C, n, s, _, _ = _update_arrays(prior.m, prior.C, prior.n, prior.s, F, y)
    return StatePosterior(t=prior.t, m=m, C=C, n=n, s=s)


@dataclass
class FilterResult:
    """Posterior trajectory plus one-step forecasts over a filtered series.

    Arrays are indexed by week 0..T-1 of the filtered range. m, C, n, s
    hold the post-update posterior each week; f, q, dof describe the
    one-step predictive made for that week; std_err is
    (y - f) / sqrt(q), NaN where the observation was missing.
    """

    structure: ModelStructure
    initial_prior: StatePosterior
    m: np.ndarray
    C: np.ndarray
    n: np.ndarray
    s: np.ndarray
    f: np.ndarray
    q: np.ndarray
    dof: np.ndarray
    std_err: np.ndarray
    observations: np.ndarray

    @property
    def n_weeks(self) -> int:
        return self.m.shape[0]

    def posterior_at(self, t: int) -> StatePosterior:
        return StatePosterior(t=t, m=self.m[t], C=self.C[t], n=float(self.n[t]), s=float(self.s[t]))

    def forecast_at(self, t: int) -> ForecastDistribution:
        """The one-step predictive that was issued for week t."""
        return ForecastDistribution(
            origin_t=t - 1, horizon_k=1,
            location=float(self.f[t]), scale=float(self.q[t]), dof=float(self.dof[t]),
        )


def filter_series(structure: ModelStructure, covariates, observations,
                  initial_prior: StatePosterior | None = None) -> FilterResult:
    """Run the forward filter over one series.

    Parameters
    ----------
    structure : ModelStructure
    covariates : mapping of name -> length-T array
        Must cover every covariate name referenced by the structure.
    observations : length-T array of floats, NaN where missing
    initial_prior : StatePosterior, optional
        Defaults to `default_initial_prior(structure, observations)`.

    Each week the filter evolves, issues the one-step forecast, then
    updates on the observation (missing observations leave the state
    untouched beyond the evolution step).
    """
    y = np.asarray(observations, dtype=float)
    T = y.shape[0]
    Fmat = resolve_F_table(structure, covariates, T)
    prior = initial_prior if initial_prior is not None else default_initial_prior(structure, y)

    d = structure.total_dimension
    if prior.m.shape[0] != d:
        raise DimensionError(
            f"initial prior dimension {prior.m.shape[0]} != structure dimension {d}"
        )
    G = structure.G
    div = structure.discount_divisor
    beta = structure.variance_discount

    out_m = np.empty((T, d))
    out_C = np.empty((T, d, d))
    out_n = np.empty(T)
    out_s = np.empty(T)
    out_f = np.empty(T)
    out_q = np.empty(T)
    out_dof = np.empty(T)
    out_se = np.full(T, np.nan)

    m, C, n, s = prior.m, prior.C, float(prior.n), float(prior.s)
    for t in range(T):
        a, R, n, s = _evolve_arrays(m, C, n, s, G, div, beta)
        F = Fmat[t]
        yt = y[t]
        out_dof[t] = n
        if np.isnan(yt):
            f = float(F @ a)
            q = float(F @ (R @ F)) + s
            m, C = a, R
        else:
            m, C, n, s, f, q = _update_arrays(a, R, n, s, F, yt)
            out_se[t] = (yt - f) / np.sqrt(q)
        out_m[t] = m
        out_C[t] = C
        out_n[t] = n
        out_s[t] = s
        out_f[t] = f
        out_q[t] = q

    return FilterResult(
        structure=structure, initial_prior=prior,
        m=out_m, C=out_C, n=out_n, s=out_s,
        f=out_f, q=out_q, dof=out_dof, std_err=out_se, observations=y,
    )


def forecast_ahead(state: StatePosterior, structure: ModelStructure,
                   future_covariates, k: int) -> list:
    """Forecast horizons 1..k from the posterior at the origin week.

    The variance-estimate discount is applied once (entering horizon 1),
    after which n and s are held fixed, so the horizon-1 forecast equals
    `step_forecast(evolve(state), F_1)` exactly.
    """
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise ParameterError(f"k must be a positive integer, got {k!r}")
    Fmat = resolve_F_table(structure, future_covariates, k)
    G = structure.G
    div = structure.discount_divisor
    a = state.m
    R = state.C
    n = state.n * structure.variance_discount
    s = state.s
    out = []
    for j in range(1, k + 1):
        a = G @ a
        R = (G @ R @ G.T) / div
        R = (R + R.T) * 0.5
        F = Fmat[j - 1]
        f = float(F @ a)
        q = float(F @ (R @ F)) + s
        out.append(ForecastDistribution(origin_t=state.t, horizon_k=j,
                                        location=f, scale=q, dof=n))
    return out


def forecast_at_origins(structure: ModelStructure, m_stack, C_stack, n_arr, s_arr,
                        F_future) -> tuple:
    """Vectorized k-step forecasting from many origins at once.

    Parameters
    ----------
    m_stack : (O, d) posterior means at each origin
    C_stack : (O, d, d) posterior scale matrices
    n_arr, s_arr : (O,) degrees of freedom and variance estimates
    F_future : (O, k, d) resolved observation vectors per origin/horizon

    Returns (location (O, k), scale (O, k), dof (O,)); same recursion as
    `forecast_ahead` applied origin-wise.
    """
    G = structure.G
    div = structure.discount_divisor
    a = np.asarray(m_stack, dtype=float)
    R = np.asarray(C_stack, dtype=float)
    O, k, d = F_future.shape
    loc = np.empty((O, k))
    scale = np.empty((O, k))
    s = np.asarray(s_arr, dtype=float)
    for j in range(k):
        a = a @ G.T
        R = np.matmul(np.matmul(G, R), G.T) / div
        R = (R + R.transpose(0, 2, 1)) * 0.5
        F = F_future[:, j, :]
        loc[:, j] = np.einsum("od,od->o", F, a)
        Rf = np.matmul(R, F[:, :, None])[:, :, 0]
        scale[:, j] = np.einsum("od,od->o", F, Rf) + s
    dof = np.asarray(n_arr, dtype=float) * structure.variance_discount
    return loc, scale, dof


def sample_states(posterior: StatePosterior, count: int, seed: int) -> np.ndarray:
    """Draw state vectors from the posterior's multivariate Student-t.

    Returns a (count, dimension) array; deterministic for a fixed seed.
    """
    if not count >= 1:
        raise ParameterError(f"count must be >= 1, got {count!r}")
    rng = np.random.default_rng(seed)
    d = posterior.m.shape[0]
    w, V = np.linalg.eigh((posterior.C + posterior.C.T) * 0.5)
    w = np.clip(w, 0.0, None)
    L = V * np.sqrt(w)
    z = rng.standard_normal((count, d))
    g = rng.chisquare(posterior.n, count) / posterior.n
    return posterior.m + (z @ L.T) / np.sqrt(g)[:, None]


def write_trajectory(result: FilterResult, path):
    """Persist a posterior trajectory as CSV.

    Layout: week, m_0..m_{d-1}, the upper triangle of C as c_i_j with
    i <= j, then n and s. One row per filtered week.
    """
    d = result.structure.total_dimension
    iu = np.triu_indices(d)
    cols = (["week"] + [f"m_{i}" for i in range(d)]
            + [f"c_{i}_{j}" for i, j in zip(*iu)] + ["n", "s"])
    T = result.n_weeks
    data = np.column_stack([
        np.arange(T, dtype=float),
        result.m,
        result.C[:, iu[0], iu[1]],
        result.n,
        result.s,
    ])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_trajectory(path):
    """Read a trajectory CSV back into arrays.

    Returns a dict with weeks (T,), m (T, d), C (T, d, d) with the lower
    triangle mirrored, n (T,), s (T,).
    """
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [list(map(float, line.strip().split(","))) for line in fh if line.strip()]
    data = np.asarray(rows)
    d = sum(1 for c in header if c.startswith("m_"))
    iu = np.triu_indices(d)
    n_tri = iu[0].size
    weeks = data[:, 0].astype(int)
    m = data[:, 1:1 + d]
    tri = data[:, 1 + d:1 + d + n_tri]
    T = data.shape[0]
    C = np.zeros((T, d, d))
    C[:, iu[0], iu[1]] = tri
    C[:, iu[1], iu[0]] = tri
    n = data[:, 1 + d + n_tri]
    s = data[:, 2 + d + n_tri]
    return {"weeks": weeks, "m": m, "C": C, "n": n, "s": s}
