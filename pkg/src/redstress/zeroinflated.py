"""Zero-inflated frequency-severity model of daily redemption rates.

A redemption rate is zero with probability 1 - p and otherwise drawn from a
severity distribution G on [0, 1].
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize, special

from . import DAYS_PER_YEAR
from .errors import (
    DomainError,
    InfeasibleMomentsError,
    NumericalError,
    UnboundedReturnTimeError,
    UnfittableError,
)
from .severity import Family, SeverityDist, beta_from_musigma

GL_START_NODES = 256
GL_MAX_NODES = 1 << 16
GL_TOL = 1e-9
MLE_GTOL = 1e-8
CLAMP_EPS = 1e-12

UNDEFINED = "undefined"


@dataclass(frozen=True)
class ZIModel:
    p: float
    severity: Optional[SeverityDist] = None

    def __post_init__(self):
        p = float(self.p)
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"frequency p must lie in [0, 1], got {p}")
        if p > 0 and self.severity is None:
            raise DomainError("a severity distribution is required when p > 0")
        object.__setattr__(self, "p", p)

    @classmethod
    def from_musigma(cls, p, mu, sigma):
        return cls(p, SeverityDist.beta_musigma(mu, sigma))


@dataclass(frozen=True)
class ZIMoments:
    mean: float
    variance: float
    skewness: object  # float, or UNDEFINED when p = 0
    excess_kurtosis: object


def zi_cdf(m: ZIModel, x):
    x = np.asarray(x, dtype=float)
    if m.p == 0:
        out = np.where(x >= 0, 1.0, 0.0)
    else:
        g = m.severity.cdf(np.clip(x, 0, 1))
        out = np.where(x < 0, 0.0, (1 - m.p) + m.p * np.where(x > 0, g, 0.0))
    return float(out) if out.ndim == 0 else out


def zi_moments(m: ZIModel) -> ZIMoments:
    p = m.p
    if p == 0:
        return ZIMoments(0.0, 0.0, UNDEFINED, UNDEFINED)
    sm = m.severity.moments()
    E, s2 = sm.mean, sm.variance
    s = math.sqrt(s2)
    g1, g2 = sm.skewness, sm.excess_kurtosis
    q = 1 - p
    mean = p * E
    var = p * s2 + p * q * E * E
    t1 = p * g1 * s ** 3 + 3 * p * q * s2 * E + p * q * (1 - 2 * p) * E ** 3
    t2 = ((p * g2 + 3 * p * q) * s2 * s2 + 4 * p * q * g1 * s ** 3 * E
          + 6 * p * q * (1 - 2 * p) * s2 * E * E + p * q * (1 - 6 * p + 6 * p * p) * E ** 4)
    return ZIMoments(mean, var, t1 / var ** 1.5, t2 / var ** 2)


def _zero_regime(p: float, alpha: float) -> bool:
    return p <= 1 - alpha + 1e-15


def zi_quantile(m: ZIModel, alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any((a <= 0) | (a >= 1)):
        raise DomainError("alpha must lie in (0, 1)")
    p = m.p
    if p == 0:
        out = np.zeros_like(a)
    else:
        zero = _zero_regime(p, a)
        level = np.clip((a + p - 1) / p, 0.0, 1.0)
        out = np.where(zero, 0.0, m.severity.quantile(np.where(zero, 0.0, level)))
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=16)
def _gl_nodes(n: int):
    x, w = leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _gl_integral(f, lo: float, hi: float):
    """Gauss-Legendre on [lo, hi], doubling nodes until successive values agree."""
    n = GL_START_NODES
    prev = None
    while n <= GL_MAX_NODES:
        x, w = _gl_nodes(n)
        half = 0.5 * (hi - lo)
        val = float(half * (w @ f(lo + half * (x + 1))))
        if prev is not None and abs(val - prev) < GL_TOL:
            return val, n
        prev = val
        n *= 2
    raise NumericalError("Gauss-Legendre quadrature did not stabilize",
                         {"nodes": n // 2, "last": prev, "interval": (lo, hi)})


def zi_cvar_quadrature(m: ZIModel, alpha: float) -> float:
    """(1/(1-alpha)) * integral_alpha^1 Q(u) du by Gauss-Legendre."""
    p = m.p
    if p == 0:
        return 0.0
    lo = max(alpha, 1 - p)

    def q(u):
        return m.severity.quantile(np.clip((u + p - 1) / p, 0.0, 1.0))

    val, _ = _gl_integral(q, lo, 1.0)
    return val / (1 - alpha)


def zi_cvar(m: ZIModel, alpha: float) -> float:
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if m.p == 0:
        return 0.0
    if _zero_regime(m.p, alpha):
        return m.p * m.severity.moments().mean / (1 - alpha)
    return zi_cvar_quadrature(m, alpha)


def zi_stress(m: ZIModel, T_years):
    """Stress scenario with a return time of T years (260 market days per year)."""
    T = np.asarray(T_years, dtype=float)
    if np.any(T <= 0):
        raise DomainError("return time must be > 0")
    t_days = DAYS_PER_YEAR * T
    p = m.p
    if p == 0:
        out = np.zeros_like(T)
    else:
        zero = p * t_days <= 1.0
        with np.errstate(divide="ignore"):
            level = np.where(zero, 0.0, 1.0 - 1.0 / (p * t_days))
        out = np.where(zero, 0.0, m.severity.quantile(np.clip(level, 0.0, 1.0)))
    return float(out) if out.ndim == 0 else out


def implied_return_time(m: ZIModel, alpha: float) -> float:
    """Return time in years of the scenario equal to the CVaR at alpha."""
    if m.p <= 0:
        raise DomainError("implied return time needs p > 0")
    c = zi_cvar(m, alpha)
    if c >= 1:
        raise UnboundedReturnTimeError(f"CVaR {c} >= 1 has no finite return time")
    tail = m.p * (1.0 - m.severity.cdf(c))
    if tail <= 0:
        raise UnboundedReturnTimeError("zero exceedance probability at the CVaR")
    return 1.0 / tail / DAYS_PER_YEAR


# -- estimation -----------------------------------------------------------------

@dataclass
class FitResult:
    model: ZIModel
    method: str
    n: int
    n1: int
    mu: Optional[float] = None
    sigma: Optional[float] = None
    loglik: Optional[float] = None
    iterations: int = 0
    converged: bool = True
    warnings: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def p(self):
        return self.model.p

    @property
    def a(self):
        return None if self.model.severity is None else self.model.severity.a

    @property
    def b(self):
        return None if self.model.severity is None else self.model.severity.b


def _values(sample):
    return np.asarray(getattr(sample, "values", sample), dtype=float).reshape(-1)


def fit_mm(sample) -> FitResult:
    method = "mm"
    x = _values(sample)
    n = x.size
    if n == 0:
        raise DomainError("empty sample")
    pos = x[x > 0]
    p_hat = pos.size / n
    if pos.size == 0:
        return FitResult(ZIModel(0.0), method, n, 0)
    if pos.size < 2:
        raise UnfittableError(f"severity needs n1 >= 2, got {pos.size}", p_hat=p_hat)
    mu, sigma = float(pos.mean()), float(pos.std(ddof=0))
    try:
        a, b = beta_from_musigma(mu, sigma)
    except InfeasibleMomentsError as exc:
        exc.p_hat = p_hat
        raise
    return FitResult(ZIModel(p_hat, SeverityDist.beta(a, b)), "mm", n, pos.size, mu, sigma)


def _beta_nll(theta, s1, s2):
    """Mean negative log-likelihood of a Beta sample in log-parameters."""
    a, b = np.exp(theta)
    f = -((a - 1) * s1 + (b - 1) * s2 - special.betaln(a, b))
    dab = special.digamma(a + b)
    ga = -(s1 - special.digamma(a) + dab) * a
    gb = -(s2 - special.digamma(b) + dab) * b
    return f, np.array([ga, gb])


def _newton_polish_beta(theta, s1, s2, max_iter: int = 50):
    """Damped Newton on the Beta log-likelihood in (a, b), from log-parameters theta."""
    a, b = np.exp(theta)
    f = _beta_nll(np.log([a, b]), s1, s2)[0]
    for it in range(max_iter):
        dab, tab = special.digamma(a + b), special.polygamma(1, a + b)
        g = -np.array([s1 - special.digamma(a) + dab, s2 - special.digamma(b) + dab])
        if max(abs(g[0] * a), abs(g[1] * b)) < 0.1 * MLE_GTOL:
            return np.log([a, b]), it
        H = np.array([[special.polygamma(1, a) - tab, -tab], [-tab, special.polygamma(1, b) - tab]])
        step = np.linalg.solve(H, g)
        t = 1.0
        while t > 1e-10:
            na, nb = a - t * step[0], b - t * step[1]
            if na > 0 and nb > 0:
                nf = _beta_nll(np.log([na, nb]), s1, s2)[0]
                if nf <= f + 1e-15 * abs(f):
                    break
            t *= 0.5
        else:
            return np.log([a, b]), it
        a, b, f = na, nb, nf
    return np.log([a, b]), max_iter


def fit_mle(sample) -> FitResult:
    method = "mle"
    x = _values(sample)
    n = x.size
    if n == 0:
        raise DomainError("empty sample")
    pos = x[x > 0]
    p_hat = pos.size / n
    if pos.size == 0:
        return FitResult(ZIModel(0.0), method, n, 0)
    if pos.size < 2:
        raise UnfittableError(f"severity needs n1 >= 2, got {pos.size}", p_hat=p_hat)
    notes = []
    if np.any(pos >= 1):
        k = int(np.count_nonzero(pos >= 1))
        notes.append(f"{k} value(s) equal to 1 clamped to 1-{CLAMP_EPS:g}")
        warnings.warn(notes[-1], stacklevel=2)
        pos = np.minimum(pos, 1 - CLAMP_EPS)
    s1 = float(np.log(pos).mean())
    s2 = float(np.log1p(-pos).mean())
    try:
        a0, b0 = beta_from_musigma(pos.mean(), pos.std())
    except InfeasibleMomentsError:
        a0, b0 = 1.0, 1.0
    res = optimize.minimize(_beta_nll, np.log([a0, b0]), args=(s1, s2), jac=True,
                            method="BFGS", options={"gtol": MLE_GTOL, "maxiter": 500})
    # BFGS can stop on line-search precision just short of gtol; the Beta
    # log-likelihood is concave in (a, b), so Newton steps finish the job.
    x, nit = _newton_polish_beta(res.x, s1, s2)
    fun, jac = _beta_nll(x, s1, s2)
    gnorm = float(np.max(np.abs(jac)))
    if not gnorm < MLE_GTOL:
        raise NumericalError("beta MLE did not converge",
                             {"grad_inf_norm": gnorm, "message": res.message, "x": x.tolist()})
    res.fun, res.nit = fun, res.nit + nit
    a, b = np.exp(x)
    return FitResult(ZIModel(p_hat, SeverityDist.beta(a, b)), "mle", n, pos.size,
                     float(pos.mean()), float(pos.std()), loglik=-res.fun * pos.size,
                     iterations=int(res.nit), converged=True, warnings=notes)
