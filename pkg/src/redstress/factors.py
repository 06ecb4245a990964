"""Regression diagnostics of daily redemption rates.

Frequency/severity decomposition, macro-factor model, two-stage
flow-performance model, VIX-conditional statistic and autocorrelation tests.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .errors import DomainError, SingularDesignError

MIN_DECOMP_OBS = 30
MIN_ACF_OBS = 30


@dataclass
class RegressionResult:
    coefficients: np.ndarray
    std_errors: np.ndarray
    centered_r2: float
    residual_variance: float
    n_obs: int
    names: list = field(default_factory=list)

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.std_errors[self.names.index(name)])

    def t(self, name: str) -> float:
        s = self.se(name)
        return self.coef(name) / s if s > 0 else math.copysign(math.inf, self.coef(name))

    def as_dict(self) -> dict:
        return {"n_obs": self.n_obs, "centered_r2": self.centered_r2,
                "residual_variance": self.residual_variance,
                "coefficients": dict(zip(self.names, map(float, self.coefficients))),
                "std_errors": dict(zip(self.names, map(float, self.std_errors)))}


def ols(y, X, include_intercept: bool = True, names: Optional[Sequence[str]] = None
        ) -> RegressionResult:
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.size:
        raise DomainError("y and X must have the same number of rows")
    cols = [f"x{i + 1}" for i in range(X.shape[1])] if names is None else list(names)
    if include_intercept:
        X = np.hstack([np.ones((y.size, 1)), X])
        cols = ["const"] + cols
    n, k = X.shape
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise DomainError("missing values after alignment")
    if n <= k:
        raise DomainError(f"need more observations ({n}) than regressors ({k})")
    if np.linalg.matrix_rank(X) < k:
        raise SingularDesignError("rank-deficient design matrix")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    ssr = float(resid @ resid)
    yc = y - y.mean()
    sst = float(yc @ yc)
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    s2 = ssr / (n - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(xtx_inv) * s2, 0.0))
    return RegressionResult(beta, se, float(min(max(r2, 0.0), 1.0)), s2, n, cols)


# -- frequency / severity decomposition ---------------------------------------------

@dataclass
class DecompositionFits:
    frequency: RegressionResult
    severity: RegressionResult
    joint: RegressionResult


def decomposition_fits(series) -> DecompositionFits:
    """R on F, R on R*, and R on (F, R*), over days where R* is defined."""
    R = np.asarray(series.rate, dtype=float)
    F = np.asarray(series.frequency, dtype=float)
    S = np.asarray(series.severity, dtype=float)
    ok = np.isfinite(S)
    if ok.sum() < MIN_DECOMP_OBS:
        raise DomainError(f"need at least {MIN_DECOMP_OBS} days with a defined severity, got {ok.sum()}")
    R, F, S = R[ok], F[ok], S[ok]
    return DecompositionFits(ols(R, F, names=["frequency"]),
                             ols(R, S, names=["severity"]),
                             ols(R, np.column_stack([F, S]), names=["frequency", "severity"]))


# -- macro factors ----------------------------------------------------------------

@dataclass
class FactorSeries:
    dates: list
    bond_return: np.ndarray
    stock_return: np.ndarray
    vol_change: np.ndarray
    h: int = 1


def read_factor_csv(path) -> dict:
    """date,value file -> {date: value}."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["date", "value"]:
            raise DomainError(f"{path}: factor CSV header must be 'date,value'")
        for row in reader:
            out[dt.date.fromisoformat(row["date"].strip())] = float(row["value"])
    return out


def factor_series_from_levels(bond: dict, stock: dict, vix: dict, h: int = 1) -> FactorSeries:
    """h-day total returns of the bond and stock indices and h-day VIX differences."""
    if h not in (1, 5, 10):
        raise DomainError("h must be 1, 5 or 10 days")
    dates = sorted(set(bond) & set(stock) & set(vix))
    b = np.array([bond[d] for d in dates])
    s = np.array([stock[d] for d in dates])
    v = np.array([vix[d] for d in dates])
    return FactorSeries(dates[h:], b[h:] / b[:-h] - 1, s[h:] / s[:-h] - 1, v[h:] - v[:-h], h)


def align(series_dates, values, factor_dates) -> tuple[np.ndarray, np.ndarray]:
    """Indices (i, j) such that series_dates[i] == factor_dates[j]."""
    pos = {d: j for j, d in enumerate(factor_dates)}
    ii, jj = [], []
    for i, d in enumerate(series_dates):
        if d in pos and np.isfinite(values[i]):
            ii.append(i)
            jj.append(pos[d])
    return np.array(ii, dtype=int), np.array(jj, dtype=int)


def macro_fit(series, f: FactorSeries) -> RegressionResult:
    R = np.asarray(series.rate, dtype=float)
    i, j = align(series.dates, R, f.dates)
    X = np.column_stack([f.bond_return[j], f.stock_return[j], f.vol_change[j]])
    return ols(R[i], X, names=["bond", "stock", "vol"])


# -- flow-performance ---------------------------------------------------------------

@dataclass
class FlowPerformanceFit:
    stage1_alpha: np.ndarray  # abnormal returns, nan during the warm-up window
    stage2: RegressionResult
    lags: int
    delta_negative: Optional[bool]  # first-lag alpha coefficient significantly < 0
    phi_negative: Optional[bool]    # first-lag return coefficient significantly < 0


def rolling_alpha(fund_returns, market_returns, window: int = 60) -> np.ndarray:
    """Abnormal return R_f(t) - b_t R_m(t), with b_t from the previous `window` days."""
    rf = np.asarray(fund_returns, dtype=float)
    rm = np.asarray(market_returns, dtype=float)
    n = rf.size
    out = np.full(n, np.nan)
    for t in range(window, n):
        x = rm[t - window:t]
        y = rf[t - window:t]
        xc = x - x.mean()
        den = xc @ xc
        b = (xc @ (y - y.mean())) / den if den > 0 else 0.0
        out[t] = rf[t] - b * rm[t]
    return out


def flow_performance_fit(rates, fund_returns, market_returns, lags: int = 1,
                         window: int = 60, z: float = 2.0) -> FlowPerformanceFit:
    """Stage 1: rolling market model. Stage 2: rate on lagged alpha, returns and rates."""
    R = np.asarray(rates, dtype=float)
    rf = np.asarray(fund_returns, dtype=float)
    alpha = rolling_alpha(rf, market_returns, window)
    if lags == 0:
        res = ols(R, np.empty((R.size, 0)), names=[])
        return FlowPerformanceFit(alpha, res, 0, None, None)
    start = window + lags
    if R.size - start <= 3 * lags + 2:
        raise DomainError("not enough observations for the requested lags")
    cols, names = [], []
    for h in range(1, lags + 1):
        sl = slice(start - h, R.size - h)
        cols += [alpha[sl], rf[sl], R[sl]]
        names += [f"alpha_l{h}", f"return_l{h}", f"rate_l{h}"]
    res = ols(R[start:], np.column_stack(cols), names=names)
    dneg = res.coef("alpha_l1") + z * res.se("alpha_l1") < 0
    pneg = res.coef("return_l1") + z * res.se("return_l1") < 0
    return FlowPerformanceFit(alpha, res, lags, bool(dneg), bool(pneg))


# -- VIX and autocorrelation --------------------------------------------------------

def vix_conditional(series, vix, threshold: float = 30.0, vix_dates=None) -> float:
    """mean(R | VIX >= threshold) / mean(R) - 1."""
    R = np.asarray(getattr(series, "rate", series), dtype=float)
    V = np.asarray(vix, dtype=float)
    if vix_dates is not None:
        i, j = align(series.dates, R, vix_dates)
        R, V = R[i], V[j]
    if R.shape != V.shape:
        raise DomainError("rate and VIX series must be aligned")
    ok = np.isfinite(R) & np.isfinite(V)
    R, V = R[ok], V[ok]
    high = V >= threshold
    if not high.any():
        raise DomainError(f"no observation with VIX >= {threshold}")
    base = R.mean()
    if base == 0:
        raise DomainError("average rate is zero")
    return float(R[high].mean() / base - 1.0)


@dataclass
class AutocorrelationResult:
    rho: np.ndarray      # orders 1..max_order
    p_values: np.ndarray
    max_rho: float
    max_order: int
    significant: bool    # p-value of the maximum below 5%


def autocorrelation(series, max_order: int = 2, level: float = 0.05) -> AutocorrelationResult:
    """Correlation between x(t) and x(t-h) with the asymptotic N(0, 1/n) test."""
    x = np.asarray(getattr(series, "rate", series), dtype=float)
    x = x[np.isfinite(x)]
    n = x.size
    if n < MIN_ACF_OBS:
        raise DomainError(f"need at least {MIN_ACF_OBS} observations, got {n}")
    rhos = []
    for h in range(1, max_order + 1):
        a, b = x[h:], x[:-h]
        if a.std() == 0 or b.std() == 0:
            raise DomainError("autocorrelation undefined for a constant series")
        rhos.append(float(np.corrcoef(a, b)[0, 1]))
    rhos = np.array(rhos)
    pv = 2 * special.ndtr(-np.abs(rhos) * math.sqrt(n))
    k = int(np.argmax(rhos))
    return AutocorrelationResult(rhos, pv, float(rhos[k]), k + 1, bool(pv[k] < level))
