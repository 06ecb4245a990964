"""Historical risk measures, Gaussian benchmark, X-statistic and coherency shocks."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .errors import DomainError, EmptySampleError

RELIABILITY_FLOOR = 200


@dataclass(frozen=True)
class MeasureReport:
    mean: float
    sd_measure: float
    var: float
    cvar: float
    ratio: float
    n: int
    alpha: float
    c: float
    low_confidence: bool = False

    def as_dict(self) -> dict:
        return {"n": self.n, "alpha": self.alpha, "c": self.c, "mean": self.mean,
                "sd_measure": self.sd_measure, "var": self.var, "cvar": self.cvar,
                "ratio": self.ratio, "low_confidence": self.low_confidence}


def empirical_quantile(x: np.ndarray, alpha: float) -> float:
    """Order statistic x_(floor(alpha*n)+1), 1-based: the smallest x with F_n(x) > alpha.

    Equals x_(ceil(alpha*n)) whenever alpha*n is not an integer.
    """
    xs = np.sort(np.asarray(x, dtype=float))
    n = xs.size
    k = math.floor(alpha * n + 1e-9) + 1
    return float(xs[min(k, n) - 1])


def cvar_ratio(q: float, c: float) -> float:
    if q > 0:
        return c / q
    return math.inf if c > 0 else 1.0


def empirical_measures(sample, c: float = 2.0, alpha: float = 0.99,
                       reliability_floor: int = RELIABILITY_FLOOR) -> MeasureReport:
    """Accepts a RedemptionSample or any array of rates."""
    x = np.asarray(getattr(sample, "values", sample), dtype=float).reshape(-1)
    if x.size == 0:
        raise EmptySampleError("empirical measures need at least one observation")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    mean = float(x.mean())
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    q = empirical_quantile(x, alpha)
    tail = x[x >= q]
    cv = float(tail.mean())
    return MeasureReport(mean=mean, sd_measure=mean + c * sd, var=q, cvar=cv,
                         ratio=cvar_ratio(q, cv), n=int(x.size), alpha=alpha, c=c,
                         low_confidence=x.size < reliability_floor)


def gaussian_ratio(alpha):
    """CVaR/VaR ratio of a standard Gaussian."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0.5) or np.any(a >= 1):
        raise DomainError("gaussian_ratio needs 0.5 < alpha < 1")
    z = special.ndtri(a)
    out = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) / ((1 - a) * z)
    return float(out) if out.ndim == 0 else out


def x_statistic(per_fund_maxima: Sequence[float]) -> float:
    x = np.asarray(per_fund_maxima, dtype=float)
    if x.size == 0:
        raise EmptySampleError("x_statistic needs at least one fund")
    return float(x.max())


def x_granularity(x1: float, n: float) -> float:
    if not 0 <= x1 <= 1 or n < 1:
        raise DomainError("need x1 in [0,1] and n >= 1")
    return float(-math.expm1(n * math.log1p(-x1))) if x1 < 1 else 1.0


def max_vs_sum_ratio(p: float, n: float) -> float:
    if not 0 < p <= 1:
        raise DomainError(f"p must lie in (0, 1], got {p}")
    if n < 1:
        raise DomainError("n must be >= 1")
    if p == 1:
        return 1.0
    return float(-math.expm1(n * math.log1p(-p)) / p)


# -- coherency rules of thumb -------------------------------------------------

@dataclass
class ShockMatrix:
    rule: str
    fund_categories: list
    investor_categories: list
    shocks: np.ndarray  # rows: fund categories j, columns: investor categories k
    investor_anchors: dict = field(default_factory=dict)
    fund_anchors: dict = field(default_factory=dict)
    fund_multipliers: dict = field(default_factory=dict)
    investor_multipliers: dict = field(default_factory=dict)
    clipped: list = field(default_factory=list)

    def get(self, fund_category, investor_category) -> float:
        j = self.fund_categories.index(fund_category)
        k = self.investor_categories.index(investor_category)
        return float(self.shocks[j, k])

    def is_coherent(self, fund_order=None, investor_order=None) -> bool:
        """Monotonicity along declared riskiness orderings (least risky first)."""
        ok = True
        if investor_order:
            cols = [self.investor_categories.index(k) for k in investor_order]
            ok &= bool(np.all(np.diff(self.shocks[:, cols], axis=1) >= -1e-15))
        if fund_order:
            rows = [self.fund_categories.index(j) for j in fund_order]
            ok &= bool(np.all(np.diff(self.shocks[rows, :], axis=0) >= -1e-15))
        return ok


def coherency_shocks(rule: str,
                     investor_anchors: Mapping[str, float] | None = None,
                     fund_multipliers: Mapping[str, float] | None = None,
                     fund_anchors: Mapping[str, float] | None = None,
                     investor_multipliers: Mapping[str, float] | None = None) -> ShockMatrix:
    """Build a fund x investor shock matrix.

    C1: S_jk = m_j * S_k. C2: S_jk = m_k * S_j. C3: average of C1 and C2.
    """
    rule = rule.upper()
    if rule not in ("C1", "C2", "C3"):
        raise DomainError(f"unknown rule {rule!r}")
    need1 = rule in ("C1", "C3")
    need2 = rule in ("C2", "C3")
    if need1 and (investor_anchors is None or fund_multipliers is None):
        raise DomainError(f"{rule} needs investor anchors and fund multipliers")
    if need2 and (fund_anchors is None or investor_multipliers is None):
        raise DomainError(f"{rule} needs fund anchors and investor multipliers")
    inv = list((investor_anchors or investor_multipliers).keys())
    fund = list((fund_multipliers or fund_anchors).keys())
    for d in (investor_anchors, fund_multipliers, fund_anchors, investor_multipliers):
        if d is not None and any(v < 0 for v in d.values()):
            raise DomainError("anchors and multipliers must be nonnegative")
    S = np.zeros((len(fund), len(inv)))
    for j, fj in enumerate(fund):
        for k, ik in enumerate(inv):
            parts = []
            if need1:
                parts.append(fund_multipliers[fj] * investor_anchors[ik])
            if need2:
                parts.append(investor_multipliers[ik] * fund_anchors[fj])
            S[j, k] = sum(parts) / len(parts)
    clipped = [(fund[j], inv[k]) for j, k in zip(*np.nonzero(S > 1.0))]
    if clipped:
        warnings.warn(f"{len(clipped)} shock(s) above 100% clipped to 100%", stacklevel=2)
        S = np.minimum(S, 1.0)
    return ShockMatrix(rule, fund, inv, S, dict(investor_anchors or {}), dict(fund_anchors or {}),
                       dict(fund_multipliers or {}), dict(investor_multipliers or {}), clipped)
