"""Shared fixtures and the acceptance summary printer."""

from __future__ import annotations

import numpy as np
import pytest

from regimekit.data import PriceSeries

ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def random_prices(seed: int, n: int = 400, ohlc: bool = True, vol: float = 0.012,
                  drift: float = 0.0, start: float = 100.0, symbol: str = "RND") -> PriceSeries:
    """Geometric random walk on business days, optionally with consistent OHLC bars."""
    rng = np.random.default_rng(seed)
    close = start * np.exp(np.cumsum(rng.normal(drift, vol, n)))
    dates = np.busday_offset(np.datetime64("2010-01-04", "D"), np.arange(n), roll="forward")
    if not ohlc:
        return PriceSeries(symbol, dates, close)
    prev = np.r_[start, close[:-1]]
    open_ = prev * np.exp(rng.normal(0.0, vol / 4, n))
    top = np.maximum(open_, close)
    bottom = np.minimum(open_, close)
    high = top * (1 + np.abs(rng.normal(0.0, vol / 2, n)))
    low = bottom * (1 - np.abs(rng.normal(0.0, vol / 2, n)))
    return PriceSeries(symbol, dates, close, open_, high, low)


@pytest.fixture
def prices():
    return random_prices(7)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        status, text = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status:4s} {text}")


def synthetic_market(path, n: int = 1400, seed: int = 3) -> None:
    """Regime-switching index with slow trend cycles, written as an OHLC CSV."""
    from regimekit import msar
    from regimekit.data import write_price_csv

    spec = msar.RegimeModelSpec(np.array([1e-4, 9e-4]))
    trans = msar.TransitionMatrix(np.array([[0.985, 0.015], [0.04, 0.96]]))
    r, _ = msar.simulate_msar(spec, trans, n, seed=seed)
    rng = np.random.default_rng(seed)
    drift = 0.0012 * np.sin(np.arange(n) / 90.0)
    close = np.r_[100.0, 100.0 * np.exp(np.cumsum(r.values + drift))]
    dates = np.r_[r.dates[0] - np.timedelta64(3, "D"), r.dates]
    high = close * (1 + np.abs(rng.normal(0, 0.004, n + 1)))
    low = close * (1 - np.abs(rng.normal(0, 0.004, n + 1)))
    open_ = np.clip(close * (1 + rng.normal(0, 0.002, n + 1)), low, high)
    write_price_csv(PriceSeries("SYN", dates, close, open_, high, low), path)
