import datetime as dt
import textwrap

import numpy as np
import pytest

from redstress.flowdata import FlowRecord, FundKind, write_flow_csv


def synthetic_records(n_funds=6, n_days=300, seed=1, p=0.2, a=1.5, b=8.0):
    """Funds with two investor categories; outflows are zero-inflated Beta fractions of TNA."""
    rng = np.random.default_rng(seed)
    start = dt.date(2020, 1, 1)
    out = []
    for f in range(n_funds):
        kind = FundKind.MANDATE if f == 0 else FundKind.POOLED
        cat = "bond" if f % 2 else "equity"
        for d in range(n_days):
            day = start + dt.timedelta(days=d)
            for inv, tna in (("retail", 4e6 + 1e6 * f), ("insurance", 3e6)):
                r = rng.beta(a, b) if rng.random() < p else 0.0
                out.append(FlowRecord(day, f"F{f:02d}", inv, cat, tna, float(rng.random() * 1e4),
                                      r * tna, kind))
    return out


@pytest.fixture
def flows_csv(tmp_path):
    path = tmp_path / "flows.csv"
    write_flow_csv(path, synthetic_records())
    return path


@pytest.fixture
def sim_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(textwrap.dedent("""
        [model]
        n = 10
        p_tilde = 0.2
        mu_tilde = 0.5
        sigma_tilde = 0.3

        [copula]
        family = clayton
        theta = 0.5

        [simulation]
        n_sims = 20000
        seed = 11
        chunk_size = 3000
        T = 1

        [stress.triplets]
        light = 0.01, 0.1, 0.1
        heavy = 0.5, 0.5, 0.2
    """))
    return path


def pytest_terminal_summary(terminalreporter):
    import sys
    lines = []
    for mod in list(sys.modules.values()):
        if getattr(mod, "__name__", "").endswith("test_acceptance"):
            lines = sorted(getattr(mod, "RESULTS", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)
