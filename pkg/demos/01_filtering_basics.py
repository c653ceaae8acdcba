"""Filtering one weekly series: model structure, missing weeks, forecasts.

Builds a trend + annual-harmonic + promotion-regression model for a
simulated log-revenue series, runs the forward filter, and walks through
the three things the filter gives you: sequential one-step forecasts,
exact skipping of missing weeks, and a 12-week-ahead Student-t forecast
distribution per horizon.

Run with:  python3 demos/01_filtering_basics.py
"""

import numpy as np
from scipy import stats

from revcast import dlm

rng = np.random.default_rng(42)
T = 156

# A promotion depth that switches regime every ~8 weeks, a yearly cycle,
# and a true promotion lift of 0.02 per depth point on the log scale.
tpr = np.zeros(T)
depth = 0.0
for t in range(T):
    if rng.random() < 1 / 8:
        depth = rng.choice([0.0, 10.0, 25.0, 40.0])
    tpr[t] = depth
season = 0.3 * np.sin(2 * np.pi * np.arange(T) / 52)
y = 4.0 + season + 0.02 * tpr + rng.normal(0, 0.08, T)

print("== 1. Assemble the model ==")
structure = dlm.superpose([
    dlm.build_component(dlm.TREND, delta=0.98),
    dlm.build_component(dlm.HARMONIC, period=52, delta=0.98),
    dlm.build_component(dlm.REGRESSION, covariate_names=("tpr_pct",), delta=0.99),
], variance_discount=0.99)
print(f"state dimension {structure.total_dimension}, "
      f"covariates {structure.covariate_names}")

print("\n== 2. Filter the series ==")
result = dlm.filter_series(structure, {"tpr_pct": tpr}, y)
post = result.posterior_at(T - 1)
coef_idx = structure.named_entries[0][0]
sd = np.sqrt(post.C[coef_idx, coef_idx])
print(f"promotion coefficient: {post.m[coef_idx]:.4f} +- {sd:.4f} (truth 0.020)")
print(f"noise variance estimate s = {post.s:.5f} (truth {0.08**2:.5f})")
year2 = slice(52, 104)
mad = np.nanmean(np.abs(y[year2] - result.f[year2]))
print(f"mean |one-step error| over year 2: {mad:.4f}")

print("\n== 3. Missing weeks ==")
y_gappy = y.copy()
y_gappy[60:64] = np.nan
gappy = dlm.filter_series(structure, {"tpr_pct": tpr}, y_gappy)
print("during a gap the state only evolves; n and s stay put:")
print(f"  n at week 59 {gappy.n[59]:.2f}, week 63 {gappy.n[63]:.2f} "
      f"(discount only), week 64 {gappy.n[64]:.2f}")
prior = gappy.posterior_at(100)
same = dlm.update(prior, dlm.resolve_F(structure, {"tpr_pct": 30.0}), dlm.MISSING)
print(f"update on a missing value returns the prior unchanged: "
      f"{np.array_equal(same.m, prior.m) and same.s == prior.s}")

print("\n== 4. Forecast 12 weeks ahead ==")
future_tpr = np.full(12, tpr[-1])
ahead = dlm.forecast_ahead(result.posterior_at(T - 1), structure,
                           {"tpr_pct": future_tpr}, k=12)
print("horizon  point(log)  90% interval (revenue scale)")
for dist in ahead:
    tq = stats.t.ppf(0.95, dist.dof) * np.sqrt(dist.scale)
    lo, hi = np.exp(dist.location - tq), np.exp(dist.location + tq)
    print(f"  {dist.horizon_k:>2}     {dist.location:7.3f}    "
          f"[{lo:8.2f}, {hi:8.2f}]")
