"""Liability liquidity stress testing: redemption-rate models, calibration and simulation."""

__version__ = "0.1.0"

DAYS_PER_YEAR = 260
