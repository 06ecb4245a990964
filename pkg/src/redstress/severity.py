"""Severity distributions on [0, 1].

Five families are supported. Beta, Kumaraswamy and LogitNormal live on the unit
interval natively. Gamma (rate parameterization) and log-logistic (a = scale,
b = shape) are truncated to [0, 1] by dividing by their raw CDF at 1.

Special functions (regularized incomplete beta/gamma, the normal CDF and its
inverse) come from ``scipy.special``. Quantiles of the Beta and truncated Gamma
families are polished by a bracketed Newton iteration on the CDF.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import InfeasibleMomentsError, NumericalError, ParameterError

QUANTILE_TOL = 1e-12
QUANTILE_MAXITER = 200


class Family(str, enum.Enum):
    BETA = "beta"
    KUMARASWAMY = "kumaraswamy"
    LOGITNORMAL = "logitnormal"
    TRUNC_GAMMA = "trunc_gamma"
    TRUNC_LOGLOGISTIC = "trunc_loglogistic"


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass(frozen=True)
class SeverityDist:
    family: Family
    a: float
    b: float

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        a, b = float(self.a), float(self.b)
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ParameterError(f"{fam.value}: parameters must be finite, got ({a}, {b})")
        if b <= 0:
            raise ParameterError(f"{fam.value}: b must be > 0, got {b}")
        if fam is not Family.LOGITNORMAL and a <= 0:
            raise ParameterError(f"{fam.value}: a must be > 0, got {a}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def beta(cls, a, b):
        return cls(Family.BETA, a, b)

    @classmethod
    def beta_musigma(cls, mu, sigma):
        return cls(Family.BETA, *beta_from_musigma(mu, sigma))

    def cdf(self, x):
        return cdf(self, x)

    def pdf(self, x):
        return pdf(self, x)

    def sample(self, rng, size):
        """i.i.d. draws; native Beta sampler, inverse transform for the other families."""
        if self.family is Family.BETA:
            return rng.beta(self.a, self.b, size)
        return self.quantile(rng.random(size))

    def quantile(self, u):
        return quantile(self, u)

    def moments(self) -> Moments:
        return moments(self)


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


# -- raw (untruncated) pieces of the two truncated families -------------------

def _gamma_norm(d):
    return special.gammainc(d.a, d.b)


def _loglogistic_norm(d):
    return 1.0 / (1.0 + d.a ** d.b)


def cdf(d: SeverityDist, x):
    x, scalar = _as_array(x)
    xc = np.clip(x, 0.0, 1.0)
    a, b = d.a, d.b
    fam = d.family
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if fam is Family.BETA:
            out = special.betainc(a, b, xc)
        elif fam is Family.KUMARASWAMY:
            out = -np.expm1(b * np.log1p(-(xc ** a)))
        elif fam is Family.LOGITNORMAL:
            z = (special.logit(xc) - a) / b
            out = special.ndtr(z)
        elif fam is Family.TRUNC_GAMMA:
            out = special.gammainc(a, b * xc) / _gamma_norm(d)
        else:  # log-logistic, a = scale, b = shape
            raw = 1.0 / (1.0 + (a / xc) ** b)
            out = raw / _loglogistic_norm(d)
    out = np.where(xc <= 0.0, 0.0, np.where(xc >= 1.0, 1.0, out))
    return _out(np.clip(out, 0.0, 1.0), scalar)


def pdf(d: SeverityDist, x):
    """Density. Endpoints where the density diverges return +inf."""
    x, scalar = _as_array(x)
    a, b = d.a, d.b
    fam = d.family
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if fam is Family.BETA:
            logg = (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - special.betaln(a, b)
            out = np.exp(logg)
            # 0 * log(0) conventions at the endpoints
            out = np.where((x == 0) & (a == 1), b, out)
            out = np.where((x == 1) & (b == 1), a, out)
        elif fam is Family.KUMARASWAMY:
            xa = x ** a
            out = a * b * x ** (a - 1) * (1 - xa) ** (b - 1)
        elif fam is Family.LOGITNORMAL:
            z = (special.logit(x) - a) / b
            out = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) / (b * x * (1 - x))
            out = np.where((x == 0) | (x == 1), 0.0, out)
        elif fam is Family.TRUNC_GAMMA:
            logg = a * np.log(b) + (a - 1) * np.log(x) - b * x - special.gammaln(a)
            out = np.exp(logg) / _gamma_norm(d)
            out = np.where((x == 0) & (a == 1), b / _gamma_norm(d), out)
        else:
            r = x / a
            out = (b / a) * r ** (b - 1) / (1 + r ** b) ** 2 / _loglogistic_norm(d)
            out = np.where((x == 0) & (b == 1), 1 / a / _loglogistic_norm(d), out)
    out = np.where((x < 0) | (x > 1), 0.0, out)
    return _out(out, scalar)


def _newton_polish(d, u, x0):
    """Bracketed Newton with bisection fallback, vectorized over u.

    Solves cdf(x) = u on [0, 1]. Iteration stops per element when the residual
    on the u-scale is below QUANTILE_TOL or the bracket collapses to float
    resolution.
    """
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    x = np.clip(x0, 0.0, 1.0)
    active = np.ones(u.shape, dtype=bool)
    for it in range(QUANTILE_MAXITER):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xi = x[idx]
        f = cdf(d, xi) - u[idx]
        done = (np.abs(f) <= QUANTILE_TOL) | (hi[idx] - lo[idx] <= 4 * np.finfo(float).eps * np.maximum(xi, 1e-300))
        # shrink the bracket
        lo[idx] = np.where(f < 0, np.maximum(lo[idx], xi), lo[idx])
        hi[idx] = np.where(f > 0, np.minimum(hi[idx], xi), hi[idx])
        g = pdf(d, xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = xi - f / g
        bad = ~np.isfinite(step) | (step <= lo[idx]) | (step >= hi[idx])
        step = np.where(bad, 0.5 * (lo[idx] + hi[idx]), step)
        x[idx] = np.where(done, xi, step)
        active[idx[done]] = False
    if active.any():
        k = int(np.nonzero(active)[0][0])
        raise NumericalError(
            f"{d.family.value} quantile did not converge in {QUANTILE_MAXITER} iterations",
            {"u": float(u[k]), "x": float(x[k]), "bracket": (float(lo[k]), float(hi[k]))},
        )
    return x


def quantile(d: SeverityDist, u):
    u, scalar = _as_array(u)
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise ParameterError("quantile level must lie in [0, 1]")
    a, b = d.a, d.b
    fam = d.family
    flat = u.reshape(-1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if fam is Family.KUMARASWAMY:
            out = (-np.expm1(np.log1p(-flat) / b)) ** (1 / a)
        elif fam is Family.LOGITNORMAL:
            out = special.expit(a + b * special.ndtri(flat))
        elif fam is Family.TRUNC_LOGLOGISTIC:
            v = flat * _loglogistic_norm(d)
            out = a * (v / (1 - v)) ** (1 / b)
        else:
            if fam is Family.BETA:
                x0 = special.betaincinv(a, b, flat)
            else:
                x0 = special.gammaincinv(a, flat * _gamma_norm(d)) / b
            x0 = np.where(np.isfinite(x0), x0, 0.5)
            inner = (flat > 0) & (flat < 1)
            out = x0.copy()
            if inner.any():
                out[inner] = _newton_polish(d, flat[inner], x0[inner])
    out = np.where(flat <= 0, 0.0, np.where(flat >= 1, 1.0, out))
    out = np.clip(out, 0.0, 1.0).reshape(u.shape)
    return _out(out, scalar)


def beta_moments(a: float, b: float) -> Moments:
    s = a + b
    mean = a / s
    var = a * b / (s * s * (s + 1))
    skew = 2 * (b - a) * np.sqrt(s + 1) / ((s + 2) * np.sqrt(a * b))
    kurt = 6 * (a - b) ** 2 * (s + 1) / (a * b * (s + 2) * (s + 3)) - 6 / (s + 3)
    return Moments(float(mean), float(var), float(skew), float(kurt))


def raw_moment_quad(d: SeverityDist, m: int) -> float:
    val, _ = integrate.quad(lambda x: x ** m * pdf(d, x), 0.0, 1.0,
                            epsabs=1e-13, epsrel=1e-10, limit=200)
    return float(val)


def moments(d: SeverityDist) -> Moments:
    if d.family is Family.BETA:
        return beta_moments(d.a, d.b)
    m1, m2, m3, m4 = (raw_moment_quad(d, k) for k in (1, 2, 3, 4))
    var = m2 - m1 ** 2
    c3 = m3 - 3 * m1 * m2 + 2 * m1 ** 3
    c4 = m4 - 4 * m1 * m3 + 6 * m1 ** 2 * m2 - 3 * m1 ** 4
    return Moments(m1, var, c3 / var ** 1.5, c4 / var ** 2 - 3.0)


def beta_from_musigma(mu: float, sigma: float) -> tuple[float, float]:
    """Method-of-moments inversion (mu, sigma) -> (a, b) for the Beta family."""
    mu, sigma = float(mu), float(sigma)
    if not 0 < mu < 1:
        raise InfeasibleMomentsError(f"mean must lie in (0, 1), got {mu}", mu, sigma)
    var = sigma * sigma
    bound = mu * (1 - mu)
    if not 0 < var < bound:
        raise InfeasibleMomentsError(
            f"infeasible beta moments: need 0 < sigma^2 < mu(1-mu) = {bound:.6g}, "
            f"got sigma^2 = {var:.6g}", mu, sigma)
    k = bound / var - 1.0
    return mu * k, (1 - mu) * k
