import math

import numpy as np
import pytest
from scipy import special, stats

from redstress.copula import CopulaSpec, cm_stats, theta_from_pearson
from redstress.errors import DomainError, NonStationaryError
from redstress.liability import IMModel, im_moments
from redstress.severity import SeverityDist
from redstress.simulate import (SimConfig, aggregate_over_horizon, cm_draw, ks_one_sample,
                                ks_two_sample, mc_risk_measures, run_chunks, sample_copula,
                                simulate_cm, simulate_im, simulate_zi, spillover_scaling, stream,
                                zi_draw)
from redstress.zeroinflated import ZIModel, zi_cdf, zi_quantile


def test_product_copula_uncorrelated():
    u = sample_copula(CopulaSpec.product(), 2, 1_000_000, stream(1, 0))
    z = special.ndtri(u)
    r = np.corrcoef(z.T)[0, 1]
    assert abs(r) < 3 / math.sqrt(1_000_000)


def test_normal_copula_correlation():
    n = 1_000_000
    z = special.ndtri(sample_copula(CopulaSpec.normal(0.5), 2, n, stream(2, 0)))
    r = np.corrcoef(z.T)[0, 1]
    assert abs(r - 0.5) < 3 * (1 - 0.25) / math.sqrt(n)


def test_clayton_kendall_tau():
    u = sample_copula(CopulaSpec.clayton(2.0), 2, 300_000, stream(3, 0))
    tau = stats.kendalltau(u[:, 0], u[:, 1]).statistic
    assert tau == pytest.approx(0.5, abs=0.01)


def test_single_holder_is_zi():
    m = IMModel.equal_weights(1, 0.2, 0.3, 0.15)
    s = simulate_cm(m, CopulaSpec.clayton(1.0), SimConfig(50_000, seed=4))
    zi = ZIModel(0.2, m.severity())
    assert ks_one_sample(s, lambda x: zi_cdf(zi, x)).pass_at_99


def test_upper_frechet_conditional_std():
    n = 16
    m = IMModel.equal_weights(n, 0.3, 0.4, 0.2)
    x = simulate_cm(m, CopulaSpec.upper_frechet(), SimConfig(100_000, seed=5)).values
    pos = x[x > 0]
    assert pos.size / x.size == pytest.approx(0.3, abs=0.005)
    assert pos.std() == pytest.approx(0.2 / math.sqrt(n), rel=0.02)


def test_im_moments_match_simulation():
    m = IMModel.equal_weights(10, 0.1, 0.5, 0.3)
    x = simulate_im(m, SimConfig(1_000_000, seed=6)).values
    mm = im_moments(m)
    n = x.size
    assert abs(x.mean() - mm.mean) < 4 * math.sqrt(mm.variance / n)
    d = x - x.mean()
    se_var = math.sqrt((np.mean(d ** 4) - x.var() ** 2) / n)
    assert abs(x.var() - mm.variance) < 4 * se_var


def test_variance_vanishes_with_n():
    v = [simulate_im(IMModel.equal_weights(n, 0.1, 0.5, 0.3), SimConfig(20_000, seed=7)).values.var()
         for n in (10, 100, 1000)]
    assert v[0] > v[1] > v[2] and v[2] < 1e-3 * 0.00315 * 100


@pytest.mark.parametrize("c", [CopulaSpec.product(), CopulaSpec.clayton(1.5), CopulaSpec.normal(0.4),
                               CopulaSpec.upper_frechet()], ids=lambda c: c.label())
def test_prob_zero_matches_analytic(c):
    m = IMModel.equal_weights(8, 0.1, 0.3, 0.2)
    x = simulate_cm(m, c, SimConfig(100_000, seed=8)).values
    p0 = cm_stats(m, c).prob_no_redemption
    assert abs(np.mean(x == 0) - p0) < 3 * math.sqrt(p0 * (1 - p0) / x.size) + 1e-12


def test_determinism_across_threads_and_chunks():
    m = IMModel.equal_weights(5, 0.2, 0.3, 0.2)
    c = CopulaSpec.clayton(0.8)
    a = simulate_cm(m, c, SimConfig(30_000, seed=9, chunk_size=4000), threads=1).values
    b = simulate_cm(m, c, SimConfig(30_000, seed=9, chunk_size=4000), threads=4).values
    assert np.array_equal(a, b)
    d = simulate_cm(m, c, SimConfig(30_000, seed=10, chunk_size=4000), threads=1).values
    assert not np.array_equal(a, d)


def test_horizon_one_day_is_daily():
    zi = ZIModel(0.3, SeverityDist.beta(2, 8))
    s = aggregate_over_horizon(zi_draw(zi), 1, 0.0, SimConfig(20_000, seed=11))
    assert ks_one_sample(s, lambda x: zi_cdf(zi, x)).pass_at_99


def test_horizon_compounding_bounds():
    zi = ZIModel(0.3, SeverityDist.beta(2, 8))
    s = aggregate_over_horizon(zi_draw(zi), 5, 0.5, SimConfig(5_000, seed=12), keep_daily=True)
    assert np.all(s.values >= s.daily.max(axis=1) - 1e-15)
    assert np.all(s.values <= s.daily.sum(axis=1) + 1e-15)
    with pytest.raises(DomainError):
        aggregate_over_horizon(zi_draw(zi), 0, 0.5, SimConfig(10))


def test_mc_measures_constant_and_ordering():
    r = mc_risk_measures(np.full(1000, 0.04))
    m = r.measures
    assert (m.mean, m.var, m.cvar, m.sd_measure) == pytest.approx((0.04,) * 4)
    assert r.se_mean == 0 and r.se_var == 0 and r.se_cvar == 0
    x = simulate_zi(ZIModel(0.2, SeverityDist.beta(2, 8)), SimConfig(50_000, seed=13)).values
    m = mc_risk_measures(x).measures
    assert m.cvar >= m.var


def test_zi_quantile_matches_mc():
    zi = ZIModel(0.1, SeverityDist.beta(12, 12))
    r = mc_risk_measures(simulate_zi(zi, SimConfig(1_000_000, seed=14)), alpha=0.99)
    assert abs(r.measures.var - zi_quantile(zi, 0.99)) < 3 * r.se_var


def test_ks_identical_and_different():
    x = np.random.default_rng(0).random(1000)
    r = ks_two_sample(x, x)
    assert r.statistic == 0 and r.pass_at_99
    assert not ks_two_sample(x, x + 0.2).pass_at_99


def test_spillover():
    s = spillover_scaling(1.0, 0.5, 0.02)
    assert s.long_run_mean == pytest.approx(0.04)
    assert spillover_scaling(0.0, 0.7, 0.02).long_run_mean == pytest.approx(0.02)
    with pytest.raises(NonStationaryError):
        spillover_scaling(2.0, 0.6, 0.02)
    noise = 0.002
    path, clips = s.path(1_000_000, noise, stream(15, 0))
    assert clips == 0
    # AR(1) long-run std of the ergodic mean: noise / (1 - phi) / sqrt(n)
    se = noise / (1 - s.phi) / math.sqrt(path.size)
    assert abs(path.mean() - s.long_run_mean) < 3 * se


def test_run_chunks_sizes():
    draw = lambda rng, size: np.full(size, float(size))
    out = run_chunks(draw, SimConfig(10, seed=0, chunk_size=4))
    assert out.tolist() == [4.0] * 8 + [2.0] * 2
