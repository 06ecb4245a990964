import math

import numpy as np
import pytest

from redstress.errors import DomainError, OrderingError
from redstress.liability import (FundMoments, IMModel, LiabilityStructure, calibrate_im,
                                 geometric_largest_holder_stress, geometric_structure,
                                 geometric_top_weights, herfindahl, herfindahl_upper_bound,
                                 im_moments, largest_holder_stress, match_im_from_zi,
                                 match_zi_from_im, prob_no_redemption, round_half_up)

TABLE = np.array([30, 20, 15, 10, 9, 7, 5, 4]) / 100


def test_herfindahl_examples():
    r = herfindahl(np.full(4, 0.25))
    assert r.H == pytest.approx(0.25) and r.effective_n == pytest.approx(4)
    assert herfindahl(np.array([42, 17, 15, 13, 9, 3, 1]) / 100).effective_n == pytest.approx(3.94, abs=0.01)
    assert herfindahl(TABLE).H == pytest.approx(0.1796, abs=5e-5)


def test_herfindahl_rejects_bad_weights():
    with pytest.raises(DomainError):
        herfindahl([0.5, 0.6])
    with pytest.raises(DomainError):
        herfindahl([1.2, -0.2])


def test_geometric_effective_n():
    assert round_half_up(geometric_structure(0.98).effective_n) == 99
    assert geometric_structure(0.98).effective_n < 100
    assert geometric_structure(0.5).effective_n == pytest.approx(3)
    assert geometric_structure(0.99).effective_n == pytest.approx(199)
    # the finite structure converges to the infinite summary
    assert geometric_structure(0.9, 2000).effective_n == pytest.approx(19, rel=1e-9)


def test_upper_bound():
    assert herfindahl_upper_bound(TABLE[:3]).H_plus == pytest.approx(0.2050, abs=5e-5)
    assert herfindahl_upper_bound(TABLE).H_plus == pytest.approx(herfindahl(TABLE).H)
    b = herfindahl_upper_bound(geometric_top_weights(0.9, 5))
    assert b.effective_n_lower == pytest.approx(13.7, abs=0.05) and round_half_up(b.effective_n_lower) == 14
    with pytest.raises(OrderingError):
        herfindahl_upper_bound([0.1, 0.3])


def test_upper_bound_dominates_all_completions():
    rng = np.random.default_rng(0)
    top = TABLE[:3]
    for _ in range(200):
        k = int(rng.integers(1, 30))
        tail = rng.dirichlet(np.ones(k)) * (1 - top.sum())
        if tail.max() > top[-1]:
            continue
        assert herfindahl(np.r_[top, tail]).H <= herfindahl_upper_bound(top).H_plus + 1e-15


def test_largest_holder_stress():
    assert geometric_largest_holder_stress(0.9, 2) == pytest.approx(0.19)
    assert geometric_largest_holder_stress(0.5, 5) == pytest.approx(0.969, abs=5e-4)
    assert largest_holder_stress(np.full(8, 1 / 8), 1) == pytest.approx(1 / 8)
    assert largest_holder_stress(TABLE, 3) == pytest.approx(0.65)
    w = geometric_structure(0.9, 3000).weight_vector()
    assert largest_holder_stress(w, 2) == pytest.approx(0.19)


def test_prob_no_redemption():
    assert prob_no_redemption(10, 0.05) == pytest.approx(0.5987, abs=5e-5)
    assert prob_no_redemption(10, 0.01) == pytest.approx(0.9044, abs=5e-5)
    assert prob_no_redemption(1, 0.3) == pytest.approx(0.7)


def test_im_moments():
    m = IMModel.equal_weights(10, 0.1, 0.5, 0.3)
    mm = im_moments(m)
    assert mm.mean == pytest.approx(0.05) and mm.variance == pytest.approx(0.00315)
    big = IMModel(LiabilityStructure(None, 1e-9), 0.1, 0.5, 0.3)
    assert im_moments(big).variance < 1e-9


def test_im_moments_monte_carlo():
    rng = np.random.default_rng(1)
    m = IMModel.equal_weights(10, 0.1, 0.5, 0.3)
    sev = m.severity()
    n = 400_000
    e = rng.random((n, 10)) < 0.1
    r = (e * sev.sample(rng, (n, 10))).mean(axis=1)
    mm = im_moments(m)
    assert abs(r.mean() - mm.mean) < 4 * math.sqrt(mm.variance / n)
    assert r.var() == pytest.approx(mm.variance, rel=0.02)


def test_match_zi_from_im():
    z = match_zi_from_im(IMModel.equal_weights(10, 0.01, 0.5, 0.1))
    assert (z.p, z.mu, z.sigma) == pytest.approx((0.0956, 0.0523, 0.0148), abs=1e-4)
    z = match_zi_from_im(IMModel.equal_weights(10, 0.002, 0.5, 0.1))
    assert (z.p, z.mu, z.sigma) == pytest.approx((0.0198, 0.0505, 0.0111), abs=1e-4)
    z = match_zi_from_im(IMModel.equal_weights(1, 0.07, 0.3, 0.1))
    assert (z.p, z.mu, z.sigma) == pytest.approx((0.07, 0.3, 0.1))


def test_match_im_from_zi():
    r = match_im_from_zi(0.05, 0.02, 0.05, 10, 0.1)
    assert (r.p_tilde, r.mu_tilde, r.sigma_tilde) == pytest.approx((0.0051, 0.1955, 0.4934), abs=1e-4)
    r = match_im_from_zi(0.10, 0.05, 0.10, 10, 0.1)
    assert (r.p_tilde, r.mu_tilde, r.sigma_tilde) == pytest.approx((0.0105, 0.4771, 0.9714), abs=1e-4)


def test_match_round_trip():
    for p, mu, s in [(0.05, 0.02, 0.05), (0.3, 0.1, 0.05), (0.01, 0.2, 0.15)]:
        r = match_im_from_zi(p, mu, s, 20, 1 / 20)
        z = match_zi_from_im(IMModel.equal_weights(20, r.p_tilde, r.mu_tilde, r.sigma_tilde))
        assert (z.p, z.mu, z.sigma) == pytest.approx((p, mu, s), abs=1e-9)


def test_calibration_examples():
    fund = (0.0823, 0.0323, 0.1086)
    c = calibrate_im([FundMoments(*fund, effective_n=1)])
    assert (c.p_tilde, c.mu_tilde, c.sigma_tilde) == pytest.approx(fund, abs=1e-6)
    c = calibrate_im([FundMoments(*fund, effective_n=5)])
    assert (c.p_tilde, c.mu_tilde, c.sigma_tilde) == pytest.approx((0.0170, 0.1561, 0.5331), abs=5e-4)
    c = calibrate_im([FundMoments(*fund, effective_n=20)])
    assert (c.p_tilde, c.mu_tilde) == pytest.approx((0.0043, 0.6204), abs=5e-4)
    assert c.converged


def test_calibration_validation():
    with pytest.raises(DomainError):
        calibrate_im([])
    with pytest.raises(DomainError):
        calibrate_im([FundMoments(0.1, 0.1, 0.1, effective_n=0.5)])
    with pytest.raises(DomainError):
        calibrate_im([FundMoments(0.1, 0.1, 0.1)], moment_weights=(1, 1))


def test_structure_validation():
    with pytest.raises(DomainError):
        LiabilityStructure.equal(0)
    with pytest.raises(DomainError):
        LiabilityStructure.summary(10, 0.05)
    assert LiabilityStructure.equal(4).weight_vector() == pytest.approx(np.full(4, 0.25))
