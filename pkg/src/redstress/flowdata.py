"""Fund-flow records, redemption rates, category pooling and daily category series."""
from __future__ import annotations

import csv
import datetime as dt
import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import (
    ConstraintViolationError,
    IngestError,
    InvalidDenominatorError,
    NormalizationError,
)

CSV_COLUMNS = ("date", "fund_id", "investor_category", "fund_category",
               "fund_kind", "tna_held", "inflow", "outflow")
DEFAULT_MIN_TNA = 5e6


class FundKind(str, enum.Enum):
    POOLED = "pooled"
    MANDATE = "mandate_or_dedicated"


@dataclass(frozen=True)
class FlowRecord:
    date: dt.date
    fund_id: str
    investor_category: str
    fund_category: str
    tna_held: float
    inflow: float
    outflow: float
    fund_kind: FundKind = FundKind.POOLED

    def __post_init__(self):
        object.__setattr__(self, "fund_kind", FundKind(self.fund_kind))
        for name in ("tna_held", "inflow", "outflow"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ConstraintViolationError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)
        if self.outflow > self.tna_held:
            raise ConstraintViolationError(
                f"outflow {self.outflow} exceeds tna_held {self.tna_held}")


@dataclass(frozen=True)
class CategoryCell:
    investor_category: str
    fund_category: str

    def label(self) -> str:
        return f"{self.investor_category}/{self.fund_category}"


@dataclass(frozen=True)
class PoolFilter:
    exclude_mandates: bool = False
    min_tna: float = DEFAULT_MIN_TNA
    start: Optional[dt.date] = None
    end: Optional[dt.date] = None


@dataclass
class RedemptionSample:
    cell: Optional[CategoryCell]
    values: np.ndarray
    n: int = field(init=False)
    n0: int = field(init=False)
    n1: int = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size and (np.any(v < 0) or np.any(v > 1) or np.any(np.isnan(v))):
            raise ConstraintViolationError("redemption rates must lie in [0, 1]")
        self.values = v
        self.n = int(v.size)
        self.n1 = int(np.count_nonzero(v > 0))
        self.n0 = self.n - self.n1

    @property
    def is_empty(self) -> bool:
        return self.n == 0

    @property
    def positive(self) -> np.ndarray:
        return self.values[self.values > 0]


@dataclass
class CategorySeries:
    cell: Optional[CategoryCell]
    dates: list
    rate: np.ndarray
    frequency: np.ndarray
    severity: np.ndarray  # nan where no fund redeemed
    n_support: np.ndarray
    n_redeeming: np.ndarray

    def __len__(self):
        return len(self.dates)


# -- rates --------------------------------------------------------------------

def gross_rate(outflow: float, tna: float) -> float:
    if not tna > 0:
        raise InvalidDenominatorError(f"TNA must be > 0, got {tna}")
    if outflow < 0:
        raise ConstraintViolationError(f"outflow must be >= 0, got {outflow}")
    if outflow > tna:
        raise ConstraintViolationError(f"outflow {outflow} exceeds TNA {tna}")
    return outflow / tna


def net_rates(inflow: float, outflow: float, tna: float) -> dict:
    gross_rate(outflow, tna)
    if inflow < 0:
        raise ConstraintViolationError(f"inflow must be >= 0, got {inflow}")
    flow = (inflow - outflow) / tna
    return {"net_flow_rate": flow, "net_redemption_rate": max(0.0, -flow)}


def implied_net_flow(tna_t1: float, tna_t0: float, nav_t1: float, nav_t0: float) -> float:
    if not nav_t0 > 0:
        raise InvalidDenominatorError(f"NAV at t0 must be > 0, got {nav_t0}")
    return tna_t1 - (nav_t1 / nav_t0) * tna_t0


def fund_rate_from_categories(weights, rates) -> float:
    w = np.asarray(weights, dtype=float)
    r = np.asarray(rates, dtype=float)
    if w.shape != r.shape:
        raise NormalizationError("weights and rates must have equal length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise NormalizationError(f"weights must be nonnegative and sum to 1, sum={w.sum()!r}")
    if np.any(r < 0) or np.any(r > 1):
        raise ConstraintViolationError("rates must lie in [0, 1]")
    return float(min(1.0, max(0.0, w @ r)))


# -- ingest -------------------------------------------------------------------

def read_flow_csv(path) -> tuple[list[FlowRecord], list[str]]:
    """Parse a flow CSV. Bad rows are reported, not fatal."""
    records, errors = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise IngestError(f"{path}: header must be exactly {','.join(CSV_COLUMNS)}, "
                              f"got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(FlowRecord(
                    date=dt.date.fromisoformat(row["date"].strip()),
                    fund_id=row["fund_id"].strip(),
                    investor_category=row["investor_category"].strip(),
                    fund_category=row["fund_category"].strip(),
                    fund_kind=FundKind(row["fund_kind"].strip()),
                    tna_held=float(row["tna_held"]),
                    inflow=float(row["inflow"]),
                    outflow=float(row["outflow"]),
                ))
            except (ValueError, TypeError, KeyError) as exc:
                errors.append(f"line {lineno}: {exc}")
    return records, errors


def write_flow_csv(path, records: Iterable[FlowRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.date.isoformat(), r.fund_id, r.investor_category, r.fund_category,
                        r.fund_kind.value, repr(r.tna_held), repr(r.inflow), repr(r.outflow)])


# -- pooling ------------------------------------------------------------------

def _fund_tna(records) -> dict:
    """Total fund TNA per (fund, date), over all investor categories."""
    tot = defaultdict(float)
    for r in records:
        tot[(r.fund_id, r.date)] += r.tna_held
    return tot


def _cell_rates(records, cell: CategoryCell, flt: PoolFilter) -> dict:
    """Per (fund, date) gross rate of the cell's holders, after filtering."""
    records = list(records)
    fund_tna = _fund_tna(records)
    held = defaultdict(float)
    out = defaultdict(float)
    for r in records:
        if r.investor_category != cell.investor_category or r.fund_category != cell.fund_category:
            continue
        if flt.exclude_mandates and r.fund_kind is FundKind.MANDATE:
            continue
        if flt.start is not None and r.date < flt.start:
            continue
        if flt.end is not None and r.date > flt.end:
            continue
        if fund_tna[(r.fund_id, r.date)] < flt.min_tna:
            continue
        key = (r.fund_id, r.date)
        held[key] += r.tna_held
        out[key] += r.outflow
    return {k: out[k] / held[k] for k in sorted(held) if held[k] > 0}


def pool(records: Iterable[FlowRecord], cell: CategoryCell,
         flt: PoolFilter = PoolFilter()) -> RedemptionSample:
    rates = _cell_rates(records, cell, flt)
    return RedemptionSample(cell, np.fromiter(rates.values(), dtype=float, count=len(rates)))


def cells_in(records: Iterable[FlowRecord]) -> list[CategoryCell]:
    return sorted({CategoryCell(r.investor_category, r.fund_category) for r in records},
                  key=lambda c: (c.investor_category, c.fund_category))


def daily_series(records: Iterable[FlowRecord], cell: CategoryCell,
                 flt: PoolFilter = PoolFilter(min_tna=0.0), tna_weighted: bool = False
                 ) -> CategorySeries:
    """Equal-weight (default) or TNA-weighted daily category series."""
    records = list(records)
    rates = _cell_rates(records, cell, flt)
    weights = {}
    if tna_weighted:
        for r in records:
            if CategoryCell(r.investor_category, r.fund_category) == cell:
                key = (r.fund_id, r.date)
                weights[key] = weights.get(key, 0.0) + r.tna_held
    by_date = defaultdict(list)
    for (fund, date), rate in rates.items():
        by_date[date].append((rate, weights.get((fund, date), 1.0)))
    dates = sorted(by_date)
    R, F, S, ns, nr = [], [], [], [], []
    for d in dates:
        vals = np.array([v for v, _ in by_date[d]])
        w = np.array([x for _, x in by_date[d]])
        w = w / w.sum()
        pos = vals > 0
        R.append(float(w @ vals))
        F.append(float(w[pos].sum()))
        S.append(float(w[pos] @ vals[pos] / w[pos].sum()) if pos.any() else math.nan)
        ns.append(len(vals))
        nr.append(int(pos.sum()))
    return CategorySeries(cell, dates, np.array(R), np.array(F), np.array(S),
                          np.array(ns, dtype=int), np.array(nr, dtype=int))
