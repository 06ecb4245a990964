"""Seeded Monte Carlo engine for redemption-rate models.

Randomness comes from Philox streams keyed by (seed, stream, chunk). Chunk k
always sees the same stream whatever the number of worker threads, so a run is
bit-identical for a fixed (seed, n_sims, chunk_size).
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import signal, special

from . import DAYS_PER_YEAR
from .copula import CopulaFamily, CopulaSpec
from .errors import DomainError, EmptySampleError, NonStationaryError
from .liability import IMModel
from .riskmeasures import MeasureReport, cvar_ratio, empirical_quantile
from .zeroinflated import ZIModel

KS_C99 = 1.628
THREADS_ENV = "REDSTRESS_THREADS"
MAX_BLOCK_CELLS = 4_000_000  # n_rows * n_investors held in memory at once

# stream tags
_MAIN, _CALIB, _PATHS = 1, 2, 3


def thread_count() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            warnings.warn(f"ignoring non-integer {THREADS_ENV}={env!r}")
    return min(4, os.cpu_count() or 1)


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    n_sims: int = 100_000
    seed: int = 0
    chunk_size: int = 50_000

    def __post_init__(self):
        if self.n_sims < 1 or self.chunk_size < 1:
            raise DomainError("n_sims and chunk_size must be >= 1")


@dataclass
class SimSample:
    values: np.ndarray
    descriptor: dict = field(default_factory=dict)
    daily: Optional[np.ndarray] = None  # per-day rates of horizon samples, when kept

    def __len__(self):
        return int(self.values.size)


def run_chunks(draw: Callable[[np.random.Generator, int], np.ndarray], cfg: SimConfig,
               tag: int = _MAIN, threads: Optional[int] = None) -> np.ndarray:
    """Evaluate draw(rng_k, size_k) per chunk and concatenate in chunk order."""
    sizes = [cfg.chunk_size] * (cfg.n_sims // cfg.chunk_size)
    if cfg.n_sims % cfg.chunk_size:
        sizes.append(cfg.n_sims % cfg.chunk_size)
    jobs = [(k, s) for k, s in enumerate(sizes)]
    fn = lambda job: np.asarray(draw(stream(cfg.seed, tag, job[0]), job[1]), dtype=float)
    nthreads = min(threads or thread_count(), len(jobs))
    if nthreads <= 1:
        parts = [fn(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as ex:
            parts = list(ex.map(fn, jobs))
    return np.concatenate(parts)


# -- copula sampling --------------------------------------------------------------

def sample_copula(c: CopulaSpec, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """size x n matrix of uniforms with exchangeable dependence c."""
    c = c.canonical()
    fam = c.family
    if fam is CopulaFamily.PRODUCT:
        return rng.random((size, n))
    if fam is CopulaFamily.UPPER_FRECHET:
        return np.repeat(rng.random((size, 1)), n, axis=1)
    if fam is CopulaFamily.NORMAL:
        th = c.theta
        z0 = rng.standard_normal((size, 1))
        z = rng.standard_normal((size, n))
        return special.ndtr(math.sqrt(th) * z0 + math.sqrt(1 - th) * z)
    th = c.theta  # Clayton, gamma frailty
    v = rng.gamma(1.0 / th, 1.0, size=(size, 1))
    e = rng.random((size, n))
    # (1 - ln(e)/V)^(-1/theta)
    return np.exp(-np.log1p(-np.log(e) / v) / th)


def sample_events(c: CopulaSpec, n: int, size: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """size x n redemption indicators {U >= 1 - p} with U ~ c, without forming U when cheaper."""
    c = c.canonical()
    fam = c.family
    thresh = 1.0 - p
    if fam is CopulaFamily.NORMAL:
        th = c.theta
        z0 = rng.standard_normal((size, 1))
        z = rng.standard_normal((size, n))
        return math.sqrt(th) * z0 + math.sqrt(1 - th) * z >= special.ndtri(thresh)
    if fam is CopulaFamily.CLAYTON and 0 < thresh < 1:
        th = c.theta
        v = rng.gamma(1.0 / th, 1.0, size=(size, 1))
        e = rng.random((size, n))
        return np.log1p(-np.log(e) / v) <= -th * math.log(thresh)
    return sample_copula(c, n, size, rng) >= thresh


# -- model simulation -------------------------------------------------------------

def _block_rows(n: int, size: int) -> int:
    return max(1, min(size, MAX_BLOCK_CELLS // max(n, 1)))


def cm_draw(m: IMModel, c: CopulaSpec):
    """Chunk sampler of the copula-correlated individual model."""
    w = m.structure.weight_vector()
    n = w.size
    sev = m.severity() if m.p_tilde > 0 else None

    def draw(rng, size):
        out = np.empty(size)
        step = _block_rows(n, size)
        for start in range(0, size, step):
            rows = min(step, size - start)
            events = sample_events(c, n, rows, m.p_tilde, rng)
            k = int(events.sum())
            y = np.zeros((rows, n))
            if k and sev is not None:
                y[events] = sev.sample(rng, k)
            out[start:start + rows] = np.clip(y @ w, 0.0, 1.0)
        return out

    return draw


def zi_draw(zi: ZIModel):
    def draw(rng, size):
        u = rng.random(size)
        out = np.zeros(size)
        hit = u >= 1.0 - zi.p
        k = int(hit.sum())
        if k:
            out[hit] = zi.severity.sample(rng, k)
        return out

    return draw


def simulate_cm(m: IMModel, c: CopulaSpec, cfg: SimConfig, threads: Optional[int] = None) -> SimSample:
    vals = run_chunks(cm_draw(m, c), cfg, threads=threads)
    return SimSample(vals, {"model": "cm", "n": m.n, "herfindahl": m.herfindahl,
                            "p_tilde": m.p_tilde, "mu_tilde": m.mu_tilde,
                            "sigma_tilde": m.sigma_tilde, "copula": c.label(),
                            "seed": cfg.seed, "n_sims": cfg.n_sims, "chunk_size": cfg.chunk_size})


def simulate_im(m: IMModel, cfg: SimConfig, threads: Optional[int] = None) -> SimSample:
    return simulate_cm(m, CopulaSpec.product(), cfg, threads)


def simulate_zi(zi: ZIModel, cfg: SimConfig, threads: Optional[int] = None) -> SimSample:
    vals = run_chunks(zi_draw(zi), cfg, threads=threads)
    return SimSample(vals, {"model": "zi", "p": zi.p, "seed": cfg.seed, "n_sims": cfg.n_sims})


# -- time aggregation -------------------------------------------------------------

@dataclass(frozen=True)
class QuantileTable:
    """Empirical quantile function with linear interpolation between order statistics."""
    sorted_values: np.ndarray

    @classmethod
    def from_sample(cls, x) -> "QuantileTable":
        xs = np.sort(np.asarray(x, dtype=float))
        xs.flags.writeable = False
        return cls(xs)

    def __call__(self, u):
        xs = self.sorted_values
        pos = np.asarray(u) * (xs.size - 1)
        lo = np.floor(pos).astype(np.int64)
        lo = np.clip(lo, 0, xs.size - 1)
        hi = np.minimum(lo + 1, xs.size - 1)
        frac = pos - lo
        return xs[lo] + frac * (xs[hi] - xs[lo])


def ar1_gaussian_paths(n_paths: int, n_h: int, rho: float, rng) -> np.ndarray:
    """Stationary Gaussian AR(1) paths with corr(z_i, z_j) = rho^|i-j|."""
    z = np.empty((n_paths, n_h))
    z[:, 0] = rng.standard_normal(n_paths)
    s = math.sqrt(max(0.0, 1.0 - rho * rho))
    for h in range(1, n_h):
        z[:, h] = rho * z[:, h - 1] + s * rng.standard_normal(n_paths)
    return z


def aggregate_over_horizon(daily_draw: Callable, n_h: int, rho_time: float, cfg: SimConfig,
                           calibration_draws: int = 100_000, threads: Optional[int] = None,
                           keep_daily: bool = False) -> SimSample:
    """Redemption rate over n_h days, R = 1 - prod(1 - R_h).

    Daily rates are dependent through a Gaussian AR(1) copula mapped into the
    empirical quantile function of the daily model, which is tabulated from
    ``calibration_draws`` draws of ``daily_draw``.
    """
    if n_h < 1:
        raise DomainError("n_h must be >= 1")
    if not 0 <= rho_time <= 1:
        raise DomainError("rho_time must lie in [0, 1]")
    calib = run_chunks(daily_draw, SimConfig(calibration_draws, cfg.seed, cfg.chunk_size),
                       tag=_CALIB, threads=threads)
    qt = QuantileTable.from_sample(calib)

    def draw(rng, size):
        daily = np.clip(qt(special.ndtr(ar1_gaussian_paths(size, n_h, rho_time, rng))), 0.0, 1.0)
        total = -np.expm1(np.log1p(-daily).sum(axis=1))
        return np.hstack([daily, total[:, None]])

    mat = run_chunks(draw, cfg, tag=_PATHS, threads=threads)
    out = SimSample(mat[:, -1].copy(), {"model": "horizon", "n_h": n_h, "rho_time": rho_time,
                                        "calibration_draws": calibration_draws,
                                        "seed": cfg.seed, "n_sims": cfg.n_sims})
    if keep_daily:
        out.daily = mat[:, :-1]
    return out


# -- risk measures on samples -----------------------------------------------------

@dataclass(frozen=True)
class MCReport:
    measures: MeasureReport
    se_mean: float
    se_sd_measure: float
    se_var: float
    se_cvar: float
    prob_zero: float
    se_prob_zero: float
    variance: float
    se_variance: float
    stress: Optional[float] = None
    T_years: Optional[float] = None

    def as_dict(self) -> dict:
        d = self.measures.as_dict()
        d.update(se_mean=self.se_mean, se_sd_measure=self.se_sd_measure, se_var=self.se_var,
                 se_cvar=self.se_cvar, prob_zero=self.prob_zero, se_prob_zero=self.se_prob_zero,
                 variance=self.variance, se_variance=self.se_variance,
                 T_years=self.T_years, stress=self.stress)
        return d


def empirical_stress(x: np.ndarray, T_years: float) -> float:
    pos = x[x > 0]
    p_eff = pos.size / x.size
    t_days = DAYS_PER_YEAR * T_years
    if p_eff * t_days <= 1.0:
        return 0.0
    return empirical_quantile(pos, 1.0 - 1.0 / (p_eff * t_days))


def mc_risk_measures(s, alpha: float = 0.99, c: float = 2.0,
                     T_years: Optional[float] = None) -> MCReport:
    x = np.asarray(getattr(s, "values", s), dtype=float)
    n = x.size
    if n == 0:
        raise EmptySampleError("empty simulated sample")
    xs = np.sort(x)
    mean = float(xs.mean())
    dev = xs - mean
    m2 = float(dev @ dev / n)
    sd = math.sqrt(m2 * n / (n - 1)) if n > 1 else 0.0
    k = math.floor(alpha * n + 1e-9) + 1
    if k > n:
        warnings.warn(f"fewer than one observation beyond alpha={alpha}; quantile is the sample max")
    q = float(xs[min(k, n) - 1])
    tail = xs[xs >= q]
    cv = float(tail.mean())
    rep = MeasureReport(mean, mean + c * sd, q, cv, cvar_ratio(q, cv), n, alpha, c,
                        low_confidence=False)
    # standard errors
    se_mean = math.sqrt(m2 / n)
    if m2 > 0:
        m3 = float((dev ** 3).mean())
        m4 = float((dev ** 4).mean())
        var_s = max(m4 - m2 * m2, 0.0) / (4 * m2 * n)
        cov = m3 / (2 * math.sqrt(m2) * n)
        se_sdm = math.sqrt(max(se_mean ** 2 + c * c * var_s + 2 * c * cov, 0.0))
        se_var2 = math.sqrt(max(m4 - m2 * m2, 0.0) / n)
    else:
        se_sdm = se_var2 = 0.0
    half = math.sqrt(n * alpha * (1 - alpha))
    j_lo = min(max(int(math.floor(alpha * n - half)), 1), n)
    j_hi = min(max(int(math.ceil(alpha * n + half)), 1), n)
    se_q = 0.5 * float(xs[j_hi - 1] - xs[j_lo - 1])
    se_c = float(tail.std(ddof=1) / math.sqrt(tail.size)) if tail.size > 1 else 0.0
    p0 = float(np.count_nonzero(xs == 0) / n)
    st = empirical_stress(x, T_years) if T_years is not None else None
    return MCReport(rep, se_mean, se_sdm, se_q, se_c, p0, math.sqrt(p0 * (1 - p0) / n),
                    m2 * n / (n - 1) if n > 1 else 0.0, se_var2, st, T_years)


# -- Kolmogorov-Smirnov -----------------------------------------------------------

@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical: float
    pass_at_99: bool


def ks_two_sample(a, b) -> KSResult:
    a = np.sort(np.asarray(getattr(a, "values", a), dtype=float))
    b = np.sort(np.asarray(getattr(b, "values", b), dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptySampleError("KS test needs two nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    crit = KS_C99 * math.sqrt((a.size + b.size) / (a.size * b.size))
    return KSResult(d, crit, d < crit)


def ks_one_sample(a, cdf) -> KSResult:
    """KS distance between a sample and a CDF that may have atoms."""
    a = np.sort(np.asarray(getattr(a, "values", a), dtype=float))
    n = a.size
    if n == 0:
        raise EmptySampleError("KS test needs a nonempty sample")
    uniq, counts = np.unique(a, return_counts=True)
    f_emp = np.cumsum(counts) / n
    f_emp_left = f_emp - counts / n
    f = np.asarray(cdf(uniq), dtype=float)
    # left limit of the model CDF: only atoms matter; approximate with F(x - tiny)
    f_left = np.asarray(cdf(np.nextafter(uniq, -np.inf)), dtype=float)
    d = float(max(np.max(np.abs(f_emp - f)), np.max(np.abs(f_emp_left - f_left))))
    crit = KS_C99 / math.sqrt(n)
    return KSResult(d, crit, d < crit)


# -- spillover ----------------------------------------------------------------------

@dataclass(frozen=True)
class Spillover:
    phi: float
    r_bar: float
    long_run_mean: float

    def path(self, n_steps: int, noise_std: float, rng: np.random.Generator,
             r0: Optional[float] = None):
        """R(t) = r_bar + phi R(t-1) + u(t), clipped to [0, 1]. Returns (path, clip_count)."""
        u = noise_std * rng.standard_normal(n_steps)
        start = self.long_run_mean if r0 is None else float(r0)
        # unclipped recursion in one pass; fall back to an explicit loop if clipping is needed
        zi = signal.lfiltic([1.0], [1.0, -self.phi], [start])
        x = signal.lfilter([1.0], [1.0, -self.phi], self.r_bar + u, zi=zi)[0]
        if np.all((x >= 0) & (x <= 1)):
            return x, 0
        out = np.empty(n_steps)
        prev, clips = start, 0
        for t in range(n_steps):
            v = self.r_bar + self.phi * prev + u[t]
            if v < 0 or v > 1:
                clips += 1
                v = min(max(v, 0.0), 1.0)
            out[t] = prev = v
        return out, clips


def spillover_scaling(phi1: float, phi2: float, r_bar: float) -> Spillover:
    phi = phi1 * phi2
    if abs(phi) >= 1:
        raise NonStationaryError(f"|phi1*phi2| = {abs(phi)} >= 1 is not stationary")
    return Spillover(phi, r_bar, r_bar / (1 - phi))
