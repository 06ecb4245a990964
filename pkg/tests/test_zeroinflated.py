import math
import warnings

import numpy as np
import pytest

from redstress.errors import InfeasibleMomentsError, UnboundedReturnTimeError, UnfittableError
from redstress.severity import SeverityDist
from redstress.zeroinflated import (UNDEFINED, ZIModel, fit_mle, fit_mm, implied_return_time,
                                    zi_cdf, zi_cvar, zi_cvar_quadrature, zi_moments, zi_quantile,
                                    zi_stress)

G = SeverityDist.beta_musigma(0.1, 0.1)


def test_cdf():
    assert zi_cdf(ZIModel(0.05, G), 0.0) == pytest.approx(0.95)
    assert zi_cdf(ZIModel(0.0), 0.3) == 1.0
    x = np.array([0.1, 0.4])
    assert zi_cdf(ZIModel(1.0, G), x) == pytest.approx(G.cdf(x))
    assert zi_cdf(ZIModel(0.3, G), 1.0) == 1.0


def test_moments_example():
    m = zi_moments(ZIModel.from_musigma(0.5, 0.4, 0.2))
    assert m.mean == pytest.approx(0.2)
    assert m.variance == pytest.approx(0.06)


def test_moments_identity_and_degenerate():
    m, s = zi_moments(ZIModel(1.0, G)), G.moments()
    assert (m.mean, m.variance, m.skewness, m.excess_kurtosis) == pytest.approx(
        (s.mean, s.variance, s.skewness, s.excess_kurtosis))
    z = zi_moments(ZIModel(0.0))
    assert z.mean == 0 and z.variance == 0 and z.skewness == UNDEFINED


def test_moments_blow_up_as_p_vanishes():
    sk = [zi_moments(ZIModel(p, G)).skewness for p in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)]
    assert np.all(np.diff(sk) > 0) and sk[-1] > 100


def test_moments_against_monte_carlo():
    rng = np.random.default_rng(5)
    n = 1_000_000
    for p in (0.01, 0.1, 0.5, 1.0):
        m = ZIModel(p, SeverityDist.beta(2, 8))
        x = np.where(rng.random(n) < p, rng.beta(2, 8, n), 0.0)
        mom = zi_moments(m)
        assert abs(x.mean() - mom.mean) < 4 * math.sqrt(mom.variance / n)
        v_se = math.sqrt((np.mean((x - x.mean()) ** 4) - x.var() ** 2) / n)
        assert abs(x.var() - mom.variance) < 4 * v_se


def test_quantile_regimes():
    assert zi_quantile(ZIModel(0.01, G), 0.99) == 0.0
    assert zi_quantile(ZIModel(0.015, G), 0.99) == pytest.approx(G.quantile(1 / 3), rel=1e-9)
    assert zi_quantile(ZIModel(0.02, G), 0.99) == pytest.approx(G.quantile(0.5), rel=1e-12)
    assert zi_quantile(ZIModel(0.0100001, G), 0.99) > 0


def test_cvar_closed_form_and_quadrature_agree():
    m = ZIModel.from_musigma(0.005, 0.4, 0.2)
    assert zi_cvar(m, 0.99) == pytest.approx(0.2)
    assert zi_cvar_quadrature(m, 0.99) == pytest.approx(0.2, abs=1e-8)


def test_cvar_dominates_var():
    for p in (0.005, 0.01, 0.05, 0.3, 1.0):
        for a in (0.9, 0.99, 0.999):
            m = ZIModel(p, G)
            assert zi_cvar(m, a) >= zi_quantile(m, a) - 1e-12


def test_cvar_p_one_is_severity_cvar():
    u = (np.arange(200000) + 0.5) / 200000
    q = G.quantile(0.99 + 0.01 * u)
    assert zi_cvar(ZIModel(1.0, G), 0.99) == pytest.approx(q.mean(), rel=1e-5)


def test_stress():
    p = 0.05
    m = ZIModel(p, G)
    assert zi_stress(m, 5) == pytest.approx(G.quantile(1 - 1 / (1300 * p)))
    assert zi_stress(ZIModel(1 / 1300, G), 5) == 0.0
    # the approach to 1 is slow for a light upper tail: 1 - S ~ T^(-1/b)
    s = zi_stress(ZIModel(0.01, G), np.array([1, 2, 5, 10, 50, 1e3, 1e6, 1e9, 1e12]))
    assert np.all(np.diff(s) > 0) and s[-1] > 0.97
    # S at the return time of the quantile equals the quantile
    assert zi_stress(m, 100 / 260) == pytest.approx(zi_quantile(m, 0.99), rel=1e-9)
    assert zi_stress(ZIModel(0.1, G), 2) >= zi_stress(ZIModel(0.05, G), 2)


def test_implied_return_time_examples():
    assert implied_return_time(ZIModel.from_musigma(0.01, 0.1, 0.1), 0.99) == pytest.approx(1.03, abs=0.02)
    assert implied_return_time(ZIModel.from_musigma(0.5, 0.5, 0.2), 0.99) == pytest.approx(0.89, abs=0.02)
    with pytest.raises(Exception):
        implied_return_time(ZIModel(0.0), 0.99)


def test_implied_return_time_unbounded(monkeypatch):
    import redstress.zeroinflated as zi
    monkeypatch.setattr(zi, "zi_cvar", lambda m, a: 1.0)
    with pytest.raises(UnboundedReturnTimeError):
        implied_return_time(ZIModel(0.5, G), 0.99)


def _zi_sample(p, a, b, n, seed):
    rng = np.random.default_rng(seed)
    return np.where(rng.random(n) < p, rng.beta(a, b, n), 0.0)


def test_fit_p_exact():
    x = np.r_[np.zeros(9000), np.full(1000, 0.1) + np.linspace(0, 0.05, 1000)]
    assert fit_mle(x).p == 0.1 and fit_mm(x).p == 0.1


def test_fit_mle_recovers():
    r = fit_mle(_zi_sample(0.1, 2, 8, 100_000, 1))
    assert r.a == pytest.approx(2, rel=0.05) and r.b == pytest.approx(8, rel=0.05)
    assert r.converged and r.loglik > 0


def test_fit_mm_recovers():
    x = _zi_sample(0.3, 12, 12, 100_000, 2)
    r = fit_mm(x)
    assert r.mu == pytest.approx(0.5, abs=0.005) and r.sigma == pytest.approx(0.1, abs=0.005)
    assert r.p == fit_mle(x).p


def test_fit_degenerate_cases():
    r = fit_mle(np.zeros(50))
    assert r.p == 0 and r.model.severity is None
    with pytest.raises(UnfittableError) as e:
        fit_mle(np.r_[np.zeros(10), 0.2])
    assert e.value.p_hat == pytest.approx(1 / 11)
    with pytest.raises(InfeasibleMomentsError):
        fit_mm(np.r_[np.zeros(10), 0.25, 0.25, 0.25])


def test_fit_mle_clamps_ones():
    x = np.r_[np.zeros(20), _zi_sample(1.0, 2, 3, 200, 3), 1.0]
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        r = fit_mle(x)
    assert w and r.warnings and r.converged
