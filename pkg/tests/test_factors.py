import datetime as dt
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest

from redstress.errors import DomainError, SingularDesignError
from redstress.factors import (FactorSeries, autocorrelation, decomposition_fits,
                               factor_series_from_levels, flow_performance_fit, macro_fit, ols,
                               read_factor_csv, vix_conditional)


def test_ols_hand_dataset():
    x = [1, 2, 3, 4, 5]
    y = [2, 3, 5, 4, 7]
    n = len(x)
    sx, sy = sum(x), sum(y)
    sxx = sum(Fraction(v * v) for v in x)
    sxy = sum(Fraction(a * b) for a, b in zip(x, y))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    const = (Fraction(sy) - slope * sx) / n
    r = ols(y, x)
    assert r.coef("const") == pytest.approx(float(const), abs=1e-13)
    assert r.coef("x1") == pytest.approx(float(slope), abs=1e-13)
    assert (const, slope) == (Fraction(9, 10), Fraction(11, 10))


def test_ols_exact_and_constant():
    x = np.arange(20.0)
    assert ols(3 * x - 1, x).centered_r2 == pytest.approx(1.0)
    r = ols(np.full(20, 0.3), x)
    assert r.coef("x1") == pytest.approx(0, abs=1e-14) and r.centered_r2 == 0.0


def test_ols_singular():
    x = np.arange(10.0)
    with pytest.raises(SingularDesignError):
        ols(x, np.column_stack([x, 2 * x]))
    with pytest.raises(DomainError):
        ols([1, 2], [1, 2])


def _series(R, F, S):
    return SimpleNamespace(rate=np.asarray(R), frequency=np.asarray(F), severity=np.asarray(S))


def test_decomposition_constructions():
    rng = np.random.default_rng(0)
    S = rng.uniform(0.01, 0.1, 200)
    F = np.full(200, 0.3)
    assert decomposition_fits(_series(F * S, F + rng.normal(0, 1e-3, 200), S)).severity.centered_r2 > 0.99
    F = rng.uniform(0.1, 0.5, 200)
    d = decomposition_fits(_series(F * 0.05, F, np.full(200, 0.05) + rng.normal(0, 1e-4, 200)))
    assert d.frequency.centered_r2 == pytest.approx(1.0)


def test_decomposition_nesting():
    rng = np.random.default_rng(1)
    for _ in range(20):
        F = rng.random(100)
        S = rng.random(100)
        d = decomposition_fits(_series(F * S + rng.normal(0, 0.05, 100), F, S))
        assert d.joint.centered_r2 >= max(d.frequency.centered_r2, d.severity.centered_r2) - 1e-12


def _factors(n, rng):
    dates = [dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(n)]
    return FactorSeries(dates, rng.normal(0, 0.005, n), rng.normal(0, 0.01, n), rng.normal(0, 1, n))


def test_macro_fit_recovers_sign():
    rng = np.random.default_rng(2)
    f = _factors(2000, rng)
    R = 0.02 - 0.01 * f.stock_return + rng.normal(0, 1e-5, 2000)
    r = macro_fit(SimpleNamespace(dates=f.dates, rate=R), f)
    assert r.coef("stock") < 0 and r.t("stock") < -2
    noise = macro_fit(SimpleNamespace(dates=f.dates, rate=rng.random(2000)), f)
    assert noise.centered_r2 < 0.01


def test_macro_fit_duplicate_column():
    rng = np.random.default_rng(3)
    f = _factors(100, rng)
    f.vol_change = f.stock_return.copy()
    with pytest.raises(SingularDesignError):
        macro_fit(SimpleNamespace(dates=f.dates, rate=rng.random(100)), f)


def test_factor_levels(tmp_path):
    d = [dt.date(2021, 1, i) for i in range(1, 8)]
    levels = {k: 100.0 * 1.01 ** i for i, k in enumerate(d)}
    f = factor_series_from_levels(levels, levels, {k: 20.0 + i for i, k in enumerate(d)}, h=5)
    assert f.dates == d[5:]
    assert f.bond_return == pytest.approx([1.01 ** 5 - 1] * 2) and f.vol_change.tolist() == [5.0, 5.0]
    p = tmp_path / "vix.csv"
    p.write_text("date,value\n2021-01-01,20.5\n2021-01-02,31\n")
    assert read_factor_csv(p) == {d[0]: 20.5, d[1]: 31.0}
    with pytest.raises(DomainError):
        factor_series_from_levels(levels, levels, levels, h=3)


def _flow_data(delta, n=10_000, seed=4):
    rng = np.random.default_rng(seed)
    rm = rng.normal(0, 0.01, n)
    rf = 0.8 * rm + rng.normal(0, 0.01, n)
    alpha = rf - 0.8 * rm
    R = np.empty(n)
    R[0] = 0.02
    for t in range(1, n):
        R[t] = 0.02 + delta * alpha[t - 1] + rng.normal(0, 0.002)
    return R, rf, rm


def test_flow_performance_recovery():
    fit = flow_performance_fit(*_flow_data(-0.5))
    d = fit.stage2.coef("alpha_l1")
    assert d < 0 and abs(d + 0.5) < 0.1 and fit.delta_negative


def test_flow_performance_null_and_no_lags():
    fit = flow_performance_fit(*_flow_data(0.0, seed=5))
    assert not fit.delta_negative and not fit.phi_negative
    zero = flow_performance_fit(*_flow_data(0.0, n=500), lags=0)
    assert zero.stage2.names == ["const"]


def test_vix_conditional():
    vix = np.r_[np.full(50, 20.0), np.full(50, 40.0)]
    assert vix_conditional(np.full(100, 0.03), vix) == pytest.approx(0)
    R = np.r_[np.full(50, 0.01), np.full(50, 0.02)]
    assert vix_conditional(R, vix) == pytest.approx(1 / 3)
    assert vix_conditional(7 * R, vix) == pytest.approx(1 / 3)
    assert vix_conditional(R, np.full(100, 35.0)) == pytest.approx(0, abs=1e-15)


def test_autocorrelation():
    assert autocorrelation(np.tile([1.0, -1.0], 50)).rho[0] == pytest.approx(-1)
    rng = np.random.default_rng(6)
    x = np.empty(10_000)
    x[0] = 0
    e = rng.standard_normal(10_000)
    for t in range(1, 10_000):
        x[t] = 0.5 * x[t - 1] + e[t]
    r = autocorrelation(x)
    assert r.rho[0] == pytest.approx(0.5, abs=0.05) and r.significant and r.max_order == 1


def test_autocorrelation_iid_frequency():
    n = 500
    ok = [abs(autocorrelation(np.random.default_rng(s).standard_normal(n), max_order=1).rho[0]) < 2 / np.sqrt(n)
          for s in range(200)]
    assert np.mean(ok) >= 0.9
