"""Exchangeable copulas for the redemption indicators of a fund's unitholders.

Families: Product (independence), Clayton(theta >= 0), Normal(theta in [0, 1],
equicorrelation) and UpperFrechet (comonotone). Redemption of investor i is
E_i = 1{U_i >= 1 - p}, so the frequency moments involve the survival
diagonal C_surv(u1, u2) = u1 + u2 - 1 + C(1 - u1, 1 - u2) = E[E_1 E_2].
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate, optimize, special

from .errors import DomainError, InfeasibleCorrelationError, NumericalError

GH_START_NODES = 128
GH_MAX_NODES = 256  # hermegauss overflows beyond this; adaptive quad takes over
GH_TOL = 1e-10
THETA_TOL = 1e-12


class CopulaFamily(str, enum.Enum):
    PRODUCT = "product"
    CLAYTON = "clayton"
    NORMAL = "normal"
    UPPER_FRECHET = "upper_frechet"


@dataclass(frozen=True)
class CopulaSpec:
    family: CopulaFamily
    theta: Optional[float] = None

    def __post_init__(self):
        fam = CopulaFamily(self.family)
        object.__setattr__(self, "family", fam)
        if fam in (CopulaFamily.PRODUCT, CopulaFamily.UPPER_FRECHET):
            object.__setattr__(self, "theta", None)
            return
        if self.theta is None or not math.isfinite(self.theta):
            raise DomainError(f"{fam.value} copula needs a finite theta")
        th = float(self.theta)
        if fam is CopulaFamily.CLAYTON and th < 0:
            raise DomainError("Clayton theta must be >= 0")
        if fam is CopulaFamily.NORMAL and not 0 <= th <= 1:
            raise DomainError("Normal theta must lie in [0, 1]; negative correlation is unsupported")
        object.__setattr__(self, "theta", th)

    @classmethod
    def product(cls):
        return cls(CopulaFamily.PRODUCT)

    @classmethod
    def upper_frechet(cls):
        return cls(CopulaFamily.UPPER_FRECHET)

    @classmethod
    def clayton(cls, theta):
        return cls(CopulaFamily.CLAYTON, theta)

    @classmethod
    def normal(cls, theta):
        return cls(CopulaFamily.NORMAL, theta)

    def canonical(self) -> "CopulaSpec":
        """Map boundary parameters to their limiting family."""
        if self.family is CopulaFamily.CLAYTON and self.theta == 0:
            return CopulaSpec.product()
        if self.family is CopulaFamily.NORMAL:
            if self.theta == 0:
                return CopulaSpec.product()
            if self.theta == 1:
                return CopulaSpec.upper_frechet()
        return self

    def label(self) -> str:
        return self.family.value if self.theta is None else f"{self.family.value}({self.theta:g})"


# -- diagonal -------------------------------------------------------------------

def _clayton_diag(theta, u, n):
    # (n u^-theta - n + 1)^(-1/theta), written with expm1/log1p for small theta
    lu = np.log(u)
    return np.exp(-np.log1p(n * np.expm1(-theta * lu)) / theta)


@functools.lru_cache(maxsize=16)
def _gh_nodes(n: int):
    x, w = hermegauss(n)
    w = w / math.sqrt(2 * math.pi)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _one_factor(h_list, theta):
    """Pr{X_i <= h_i for all i}, X_i = sqrt(theta) Z0 + sqrt(1-theta) Z_i.

    Gauss-Hermite on the common factor, doubled until stable. Falls back to
    adaptive quadrature if the node cap is hit (theta close to 1).
    """
    h = np.asarray(h_list, dtype=float)
    rt, rs = math.sqrt(theta), math.sqrt(1 - theta)

    def integrand(s):
        s = np.atleast_1d(s)
        z = (h[:, None] - rt * s[None, :]) / rs
        return np.exp(special.log_ndtr(z).sum(axis=0))

    prev = None
    n = GH_START_NODES
    while n <= GH_MAX_NODES:
        x, w = _gh_nodes(n)
        val = float(w @ integrand(x))
        if prev is not None and abs(val - prev) < GH_TOL:
            return val
        prev = val
        n *= 2
    # sharp integrand: adaptive quadrature around the kink location
    kinks = sorted(set(float(v) for v in h / rt)) if rt > 0 else []
    f = lambda s: float(integrand(s)[0]) * math.exp(-0.5 * s * s) / math.sqrt(2 * math.pi)
    val, err = integrate.quad(f, -40, 40, points=[k for k in kinks if -40 < k < 40] or None,
                              limit=500, epsabs=1e-13, epsrel=1e-11)
    if err > 1e-8:
        raise NumericalError("Normal copula quadrature did not converge", {"estimate": val, "error": err})
    return val


def _normal_diag(theta, u, n):
    h = special.ndtri(u)
    return _one_factor(np.full(int(n), h), theta)


def diagonal(c: CopulaSpec, u, n: int):
    """C(u, ..., u) in dimension n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    c = c.canonical()
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr < 0) | (u_arr > 1)):
        raise DomainError("u must lie in [0, 1]")
    fam = c.family
    if fam is CopulaFamily.PRODUCT:
        out = u_arr ** n
    elif fam is CopulaFamily.UPPER_FRECHET:
        out = u_arr.copy()
    elif fam is CopulaFamily.CLAYTON:
        with np.errstate(divide="ignore"):
            out = np.where(u_arr > 0, _clayton_diag(c.theta, np.where(u_arr > 0, u_arr, 1.0), n), 0.0)
    else:
        flat = u_arr.reshape(-1)
        out = np.array([0.0 if v <= 0 else 1.0 if v >= 1 else _normal_diag(c.theta, v, n)
                        for v in flat]).reshape(u_arr.shape)
    out = np.clip(out, u_arr ** n, u_arr)
    return float(out) if out.ndim == 0 else out


def bivariate(c: CopulaSpec, u1: float, u2: float) -> float:
    """C(u1, u2)."""
    c = c.canonical()
    if u1 <= 0 or u2 <= 0:
        return 0.0
    if u1 >= 1:
        return float(u2)
    if u2 >= 1:
        return float(u1)
    fam = c.family
    if fam is CopulaFamily.PRODUCT:
        val = u1 * u2
    elif fam is CopulaFamily.UPPER_FRECHET:
        val = min(u1, u2)
    elif fam is CopulaFamily.CLAYTON:
        th = c.theta
        val = math.exp(-math.log1p(math.expm1(-th * math.log(u1)) + math.expm1(-th * math.log(u2))) / th)
    else:
        val = _bvn_cdf(float(special.ndtri(u1)), float(special.ndtri(u2)), c.theta)
    return float(min(max(val, u1 * u2), min(u1, u2)))


def _bvn_cdf(h: float, k: float, rho: float) -> float:
    """Standard bivariate normal CDF through Owen's T function."""
    if rho == 0:
        return float(special.ndtr(h) * special.ndtr(k))
    r = math.sqrt((1 - rho) * (1 + rho))
    if h == 0 and k == 0:
        return 0.25 + math.asin(rho) / (2 * math.pi)
    if h == 0:
        h = 1e-300 if k > 0 else -1e-300  # the limit is continuous in h
    if k == 0:
        k = 1e-300 if h > 0 else -1e-300
    ah = (k - rho * h) / (h * r)
    ak = (h - rho * k) / (k * r)
    beta = 0.0 if (h * k > 0 or (h * k == 0 and h + k >= 0)) else 0.5
    return float(0.5 * special.ndtr(h) + 0.5 * special.ndtr(k)
                 - special.owens_t(h, ah) - special.owens_t(k, ak) - beta)


def survival_bivariate(c: CopulaSpec, u1: float, u2: float) -> float:
    """u1 + u2 - 1 + C(1 - u1, 1 - u2) = E[1{U1 >= 1-u1} 1{U2 >= 1-u2}]."""
    val = u1 + u2 - 1 + bivariate(c, 1 - u1, 1 - u2)
    return float(min(max(val, u1 * u2), min(u1, u2)))


def survival_diag2(c: CopulaSpec, u: float) -> float:
    return survival_bivariate(c, u, u)


# -- correlation views ----------------------------------------------------------

@dataclass(frozen=True)
class CorrelationViews:
    kendall_tau: float
    spearman_rho: float
    pearson_rho: float


def _spearman_from_pearson(r):
    return 6.0 / math.pi * math.asin(r / 2.0)


def clayton_pearson(theta: float) -> float:
    return math.sin(math.pi * theta / (2 * theta + 4))


def correlation_views(c: CopulaSpec) -> CorrelationViews:
    """Kendall tau, Spearman rho and Pearson rho associated with a spec.

    For Clayton the Pearson view is the sin(pi*theta/(2*theta+4)) approximation
    and Spearman is derived from it with the Gaussian 6/pi*arcsin(r/2) mapping.
    """
    c = c.canonical()
    fam = c.family
    if fam is CopulaFamily.PRODUCT:
        return CorrelationViews(0.0, 0.0, 0.0)
    if fam is CopulaFamily.UPPER_FRECHET:
        return CorrelationViews(1.0, 1.0, 1.0)
    th = c.theta
    if fam is CopulaFamily.CLAYTON:
        r = clayton_pearson(th)
        return CorrelationViews(th / (th + 2), _spearman_from_pearson(r), r)
    return CorrelationViews(2 / math.pi * math.asin(th), _spearman_from_pearson(th), th)


def theta_from_pearson(family, rho: float) -> CopulaSpec:
    fam = CopulaFamily(family)
    if not 0 <= rho <= 1:
        raise DomainError("rho must lie in [0, 1]")
    if fam is CopulaFamily.NORMAL:
        return CopulaSpec.normal(rho)
    if fam is CopulaFamily.CLAYTON:
        if rho == 0:
            return CopulaSpec.clayton(0.0)
        if rho >= 1:
            return CopulaSpec.upper_frechet()
        # invert sin(pi t/(2t+4)) = rho:  t/(2t+4) = asin(rho)/pi
        x = math.asin(rho) / math.pi
        return CopulaSpec.clayton(4 * x / (1 - 2 * x))
    raise DomainError(f"no parameter for family {fam.value}")


# -- frequency moments ----------------------------------------------------------

@dataclass(frozen=True)
class FreqMoments:
    mean: float
    variance: float


def freq_moments(p_tilde: float, H: float, c: CopulaSpec) -> FreqMoments:
    if not 0 < H <= 1:
        raise DomainError("H must lie in (0, 1]")
    cs = survival_diag2(c, p_tilde)
    return FreqMoments(p_tilde, p_tilde * (H - p_tilde) + cs * (1 - H))


@dataclass(frozen=True)
class ThetaCalibration:
    spec: CopulaSpec
    theta: float  # math.inf when the comonotone bound is reached
    pearson: float
    target: float


def calibrate_theta(mean_F: float, std_F: float, H: float, family) -> ThetaCalibration:
    """Solve C_surv(F, F) = (s^2 - F(H - F))/(1 - H) for theta by bisection."""
    fam = CopulaFamily(family)
    if fam not in (CopulaFamily.CLAYTON, CopulaFamily.NORMAL):
        raise DomainError("theta calibration needs a Clayton or Normal family")
    if not 0 < H < 1:
        raise DomainError("need 0 < H < 1")
    F = float(mean_F)
    if not 0 < F < 1:
        raise DomainError("mean frequency must lie in (0, 1)")
    target = (std_F ** 2 - F * (H - F)) / (1 - H)
    lo_b, hi_b = F * F, F
    tol = 1e-14
    if target < lo_b - tol:
        raise InfeasibleCorrelationError(
            f"frequency variance below the independence bound (target {target:.6g} < F^2 = {lo_b:.6g})")
    if target > hi_b + tol:
        raise InfeasibleCorrelationError(
            f"frequency variance above the comonotone bound (target {target:.6g} > F = {hi_b:.6g})")
    if target <= lo_b:
        spec = CopulaSpec(fam, 0.0)
        return ThetaCalibration(spec, 0.0, 0.0, target)
    if target >= hi_b:
        return ThetaCalibration(CopulaSpec.upper_frechet(), math.inf, 1.0, target)

    g = lambda th: survival_diag2(CopulaSpec(fam, th), F) - target
    if fam is CopulaFamily.NORMAL:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = 0.0, 1.0
        while g(hi) < 0:
            lo, hi = hi, hi * 2
            if hi > 1e8:
                return ThetaCalibration(CopulaSpec.upper_frechet(), math.inf, 1.0, target)
    th = optimize.bisect(g, lo, hi, xtol=THETA_TOL, rtol=4 * np.finfo(float).eps, maxiter=500)
    spec = CopulaSpec(fam, th)
    return ThetaCalibration(spec, th, correlation_views(spec).pearson_rho, target)


def cross_correlation(p1: float, p2: float, c12: CopulaSpec,
                      intra1: tuple, intra2: tuple) -> float:
    """Pearson correlation of the frequencies of two categories.

    intra_k = (CopulaSpec, H_k) describes dependence inside category k.
    """
    m1 = freq_moments(p1, intra1[1], intra1[0]).variance
    m2 = freq_moments(p2, intra2[1], intra2[0]).variance
    if m1 <= 0 or m2 <= 0:
        raise DomainError("correlation undefined: zero frequency variance")
    if c12.canonical().family is CopulaFamily.PRODUCT:
        return 0.0
    return (survival_bivariate(c12, p1, p2) - p1 * p2) / math.sqrt(m1 * m2)


# -- the correlated individual model ---------------------------------------------

@dataclass(frozen=True)
class CMStats:
    prob_no_redemption: float
    mean: float
    variance: float


def cm_stats(m, c: CopulaSpec) -> CMStats:
    """Pr{R=0}, mean and variance of the IM with copula-correlated redemption events."""
    if m.n is None:
        raise DomainError("explicit n required")
    pt, mt, st, H = m.p_tilde, m.mu_tilde, m.sigma_tilde, m.herfindahl
    p0 = diagonal(c, 1 - pt, m.n)
    cs = survival_diag2(c, pt)
    var = (pt * st * st + (pt - cs) * mt * mt) * H + (cs - pt * pt) * mt * mt
    return CMStats(float(p0), pt * mt, float(var))
