"""Individual-based redemption model.

A fund's liability is split among n unitholders with weights w. Each holder
redeems independently with probability p_tilde and, when redeeming, withdraws a
Beta-distributed fraction with mean mu_tilde and std sigma_tilde of its holding.
The Herfindahl index H = sum(w^2) summarizes the concentration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import (
    DomainError,
    InfeasibleMomentsError,
    NormalizationError,
    NumericalError,
    OrderingError,
)
from .severity import Family, SeverityDist

PARAM_UPPER = 10.0
N_STARTS = 5


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class LiabilityStructure:
    """Explicit weights, or a summary (n, H). n is None for an unbounded structure."""
    n: Optional[int]
    herfindahl: float
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        H = float(self.herfindahl)
        if not 0 < H <= 1 + 1e-12:
            raise DomainError(f"Herfindahl index must lie in (0, 1], got {H}")
        if self.n is not None:
            if self.n < 1:
                raise DomainError("n must be >= 1")
            if H < 1.0 / self.n - 1e-12:
                raise DomainError(f"H={H} below the 1/n bound for n={self.n}")
        object.__setattr__(self, "herfindahl", min(H, 1.0))

    @classmethod
    def from_weights(cls, weights) -> "LiabilityStructure":
        w = _check_simplex(weights)
        w.flags.writeable = False
        return cls(int(w.size), float(w @ w), w)

    @classmethod
    def equal(cls, n: int) -> "LiabilityStructure":
        if int(n) != n or n < 1:
            raise DomainError(f"n must be a positive integer, got {n}")
        return cls(int(n), 1.0 / n, None)

    @classmethod
    def summary(cls, n, herfindahl) -> "LiabilityStructure":
        return cls(n, herfindahl, None)

    @property
    def effective_n(self) -> float:
        return 1.0 / self.herfindahl

    def weight_vector(self) -> np.ndarray:
        if self.weights is not None:
            return np.asarray(self.weights)
        if self.n is None:
            raise DomainError("unbounded summary structure has no weight vector")
        if abs(self.herfindahl - 1.0 / self.n) > 1e-12:
            raise DomainError("summary structure with H != 1/n has no canonical weight vector")
        return np.full(self.n, 1.0 / self.n)


def _check_simplex(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size == 0:
        raise NormalizationError("empty weight vector")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise NormalizationError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
    return w


@dataclass(frozen=True)
class HerfindahlResult:
    H: float
    effective_n: float


def herfindahl(weights) -> HerfindahlResult:
    w = _check_simplex(weights)
    H = float(w @ w)
    return HerfindahlResult(H, 1.0 / H)


def geometric_weights(q: float, n: int) -> np.ndarray:
    if not 0 < q < 1:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    w = q ** np.arange(n, dtype=float)
    return w / w.sum()


def geometric_structure(q: float, n: Optional[int] = None) -> LiabilityStructure:
    """Weights proportional to q^i; n=None gives the infinite-series summary."""
    if not 0 < q < 1:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    if n is None:
        return LiabilityStructure(None, (1 - q) ** 2 / (1 - q * q))
    return LiabilityStructure.from_weights(geometric_weights(q, n))


def geometric_top_weights(q: float, m: int) -> np.ndarray:
    """The m largest weights of the infinite geometric structure."""
    return (1 - q) * q ** np.arange(m, dtype=float)


@dataclass(frozen=True)
class HerfindahlBound:
    H_plus: float
    effective_n_lower: float


def herfindahl_upper_bound(top_weights: Sequence[float]) -> HerfindahlBound:
    """Upper bound of H knowing only the m largest weights (descending)."""
    w = np.asarray(top_weights, dtype=float).reshape(-1)
    if w.size == 0:
        raise DomainError("need at least one weight")
    if np.any(np.diff(w) > 0):
        raise OrderingError("top weights must be in descending order")
    if np.any(w <= 0) or np.any(w > 1):
        raise DomainError("weights must lie in (0, 1]")
    rest = 1.0 - w.sum()
    if rest < -1e-10:
        raise DomainError("partial sum of weights exceeds 1")
    H = float(w @ w + max(rest, 0.0) * w[-1])
    return HerfindahlBound(H, 1.0 / H)


def largest_holder_stress(weights, m: int) -> float:
    w = np.sort(_check_simplex(weights))[::-1]
    if not 1 <= m <= w.size:
        raise DomainError(f"m must lie in [1, {w.size}], got {m}")
    return float(min(1.0, w[:m].sum()))


def geometric_largest_holder_stress(q: float, m: int) -> float:
    """Closed form 1 - q^m for the infinite geometric structure."""
    if m < 1:
        raise DomainError("m must be >= 1")
    return float(1.0 - q ** m)


def prob_no_redemption(n, p_tilde):
    if np.any(np.asarray(n) < 1):
        raise DomainError("n must be >= 1")
    return (1.0 - np.asarray(p_tilde, dtype=float)) ** np.asarray(n, dtype=float)


# -- the model ------------------------------------------------------------------

@dataclass(frozen=True)
class IMModel:
    structure: LiabilityStructure
    p_tilde: float
    mu_tilde: float
    sigma_tilde: float
    severity_family: Family = Family.BETA

    def __post_init__(self):
        if not 0 <= self.p_tilde <= 1:
            raise DomainError(f"p_tilde must lie in [0, 1], got {self.p_tilde}")
        if self.mu_tilde < 0 or self.sigma_tilde < 0:
            raise DomainError("mu_tilde and sigma_tilde must be >= 0")

    @classmethod
    def equal_weights(cls, n, p_tilde, mu_tilde, sigma_tilde):
        return cls(LiabilityStructure.equal(n), p_tilde, mu_tilde, sigma_tilde)

    @property
    def n(self):
        return self.structure.n

    @property
    def herfindahl(self):
        return self.structure.herfindahl

    def severity(self) -> SeverityDist:
        if self.severity_family is not Family.BETA:
            raise DomainError("only Beta severities can be built from (mu, sigma)")
        return SeverityDist.beta_musigma(self.mu_tilde, self.sigma_tilde)

    def second_moment(self) -> float:
        """E[R*_i^2 E_i] = p(sigma^2 + mu^2); the (1-p) term is added by callers."""
        return self.p_tilde * (self.sigma_tilde ** 2 + self.mu_tilde ** 2)


@dataclass(frozen=True)
class IMMoments:
    mean: float
    variance: float


def im_moments(m: IMModel) -> IMMoments:
    p, mu, s = m.p_tilde, m.mu_tilde, m.sigma_tilde
    return IMMoments(p * mu, p * (s * s + (1 - p) * mu * mu) * m.herfindahl)


@dataclass(frozen=True)
class ZIParams:
    p: float
    mu: Optional[float]
    sigma: Optional[float]


@dataclass(frozen=True)
class IMParams:
    p_tilde: float
    mu_tilde: float
    sigma_tilde: float
    unrealistic: bool = False


def match_zi_from_im(m: IMModel) -> ZIParams:
    """ZI parameters with the same Pr{R=0}, mean and variance as the IM."""
    if m.n is None:
        raise DomainError("matching needs an explicit number of unitholders")
    pt, mt, st, H = m.p_tilde, m.mu_tilde, m.sigma_tilde, m.herfindahl
    p = float(-math.expm1(m.n * math.log1p(-pt))) if pt < 1 else 1.0
    if p == 0:
        return ZIParams(0.0, None, None)
    mu = pt * mt / p
    s2 = (pt * (st * st + (1 - pt) * mt * mt) * H - p * (1 - p) * mu * mu) / p
    return ZIParams(p, mu, math.sqrt(max(s2, 0.0)))


def match_im_from_zi(p: float, mu: float, sigma: float, n: int, H: float) -> IMParams:
    if not 0 < p < 1:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if n < 1 or not (1.0 / n - 1e-12 <= H <= 1.0):
        raise DomainError(f"need n >= 1 and 1/n <= H <= 1 (n={n}, H={H})")
    pt = float(-math.expm1(math.log1p(-p) / n))
    mt = p * mu / pt
    s2 = (p * sigma * sigma + p * (1 - p) * mu * mu) / (pt * H) - (1 - pt) * mt * mt
    if s2 < 0:
        raise InfeasibleMomentsError(
            f"no individual severity variance matches (sigma_tilde^2 = {s2:.6g} < 0)", mu, sigma)
    st = math.sqrt(s2)
    return IMParams(pt, mt, st, unrealistic=bool(mt > 1 or st > 1))


# -- calibration ----------------------------------------------------------------

@dataclass(frozen=True)
class FundMoments:
    p_hat: float
    mu_hat: float
    sigma_hat: float
    effective_n: float = 1.0


@dataclass
class IMCalibration:
    p_tilde: float
    mu_tilde: float
    sigma_tilde: float
    criterion: float
    residuals: np.ndarray
    unrealistic: bool
    starts: int
    converged: bool
    message: str = ""
    start_costs: list = field(default_factory=list)


def _exact_inversion(f: FundMoments):
    N = f.effective_n
    pt = -math.expm1(math.log1p(-f.p_hat) / N)
    mt = f.p_hat * f.mu_hat / pt
    m2 = f.p_hat * (f.sigma_hat ** 2 + (1 - f.p_hat) * f.mu_hat ** 2)
    s2 = m2 * N / pt - (1 - pt) * mt * mt
    return pt, mt, math.sqrt(max(s2, 1e-12))


def _calibration_residuals(funds, fw, mw):
    p = np.array([f.p_hat for f in funds])
    mu = np.array([f.mu_hat for f in funds])
    sg = np.array([f.sigma_hat for f in funds])
    N = np.array([f.effective_n for f in funds])
    t1 = p
    t2 = p * mu
    t3 = p * (sg * sg + (1 - p) * mu * mu)
    sw = np.sqrt(np.asarray(fw, dtype=float))
    sp, sm, ss = np.sqrt(mw)

    def resid(x):
        pt, mt, st = np.exp(x)
        r1 = sp * sw * (t1 - 1 + np.exp(N * np.log1p(-pt)))
        r2 = sm * sw * (t2 - pt * mt)
        r3 = ss * sw * (t3 - pt * (st * st + (1 - pt) * mt * mt) / N)
        return np.concatenate([r1, r2, r3])

    return resid


def calibrate_im(per_fund: Sequence[FundMoments], fund_weights=None,
                 moment_weights=(1.0, 1.0, 1.0), seed: int = 0) -> IMCalibration:
    """Fit (p_tilde, mu_tilde, sigma_tilde) to per-fund ZI moments.

    The criterion is a weighted sum of squared moment residuals (frequency, mean,
    second moment). It is minimized in log-parameters with a bounded
    trust-region least-squares solver from several deterministic starts.
    """
    funds = list(per_fund)
    if not funds:
        raise DomainError("need at least one fund")
    for f in funds:
        if f.effective_n < 1:
            raise DomainError(f"effective_n must be >= 1, got {f.effective_n}")
        if not 0 < f.p_hat < 1:
            raise DomainError(f"p_hat must lie in (0, 1), got {f.p_hat}")
    fw = np.ones(len(funds)) if fund_weights is None else np.asarray(fund_weights, dtype=float)
    if fw.shape != (len(funds),) or np.any(fw < 0) or fw.sum() <= 0:
        raise DomainError("fund weights must be nonnegative with a positive sum")
    fw = fw / fw.sum()
    mw = np.asarray(moment_weights, dtype=float)
    if mw.shape != (3,) or np.any(mw < 0):
        raise DomainError("moment weights must be three nonnegative numbers")
    resid = _calibration_residuals(funds, fw, mw)

    lo = np.log([1e-12, 1e-12, 1e-12])
    hi = np.log([1 - 1e-12, PARAM_UPPER, PARAM_UPPER])
    avg = FundMoments(float(fw @ [f.p_hat for f in funds]), float(fw @ [f.mu_hat for f in funds]),
                      float(fw @ [f.sigma_hat for f in funds]),
                      float(fw @ [f.effective_n for f in funds]))
    x0 = np.clip(np.log(_exact_inversion(avg)), lo + 1e-9, hi - 1e-9)
    rng = np.random.default_rng(seed)
    starts = [x0] + [np.clip(x0 + rng.normal(0, 0.5, 3), lo + 1e-9, hi - 1e-9)
                     for _ in range(N_STARTS - 1)]
    best, costs = None, []
    for xs in starts:
        r0 = resid(xs)
        if not np.any(r0):  # exact solution already
            res = optimize.OptimizeResult(x=xs, fun=r0, cost=0.0, success=True, message="exact start")
        else:
            res = optimize.least_squares(resid, xs, bounds=(lo, hi), method="trf", x_scale="jac",
                                         xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        costs.append(float(res.cost))
        if best is None or res.cost < best.cost:
            best = res
    if not np.all(np.isfinite(best.x)):
        raise NumericalError("IM calibration failed", {"residuals": best.fun.tolist()})
    pt, mt, st = (float(v) for v in np.exp(best.x))
    return IMCalibration(pt, mt, st, criterion=2 * float(best.cost), residuals=best.fun,
                         unrealistic=bool(mt > 1 or st > 1), starts=len(starts),
                         converged=bool(best.success), message=str(best.message),
                         start_costs=costs)
