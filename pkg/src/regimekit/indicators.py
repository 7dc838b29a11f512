"""Technical indicators over daily closes.

Every function returns :class:`IndicatorSeries` values aligned to the input
dates, with the leading warm-up entries set to NaN (never zero-filled).
Inputs may be a :class:`~regimekit.data.PriceSeries` (its closes are used), an
:class:`IndicatorSeries` (so indicators compose) or a plain sequence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from regimekit.data import PriceSeries
from regimekit.errors import InvalidSpans, InvertedSwing, LengthMismatch, WindowExceedsSeries

FIB_RATIOS = (0.236, 0.382, 0.5, 0.618, 1.0)


@dataclass(frozen=True)
class IndicatorSeries:
    dates: np.ndarray
    values: np.ndarray
    warmup: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.dates is None:
            object.__setattr__(self, "dates", np.arange(len(self.values)).astype("datetime64[D]"))
        else:
            object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))
        if len(self.dates) != len(self.values):
            raise LengthMismatch("dates and values differ in length")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def __add__(self, other):
        return _combine(self, other, np.add)

    def __sub__(self, other):
        return _combine(self, other, np.subtract)

    def __mul__(self, scalar: float):
        return IndicatorSeries(self.dates, self.values * scalar, self.warmup)


@dataclass(frozen=True)
class Band:
    lower: IndicatorSeries
    middle: IndicatorSeries
    upper: IndicatorSeries


def _combine(a: IndicatorSeries, b, op) -> IndicatorSeries:
    if isinstance(b, IndicatorSeries):
        if len(a) != len(b):
            raise LengthMismatch(f"series lengths differ: {len(a)} vs {len(b)}")
        return IndicatorSeries(a.dates, op(a.values, b.values), max(a.warmup, b.warmup))
    return IndicatorSeries(a.dates, op(a.values, float(b)), a.warmup)


def _unpack(p):
    """(dates, values, warmup) for any supported input."""
    if isinstance(p, PriceSeries):
        return p.dates, p.close, 0
    if isinstance(p, IndicatorSeries):
        return p.dates, p.values, p.warmup
    values = np.asarray(p, dtype=float)
    return None, values, 0


def _pad(values: np.ndarray, lead: int, total: int) -> np.ndarray:
    out = np.full(total, np.nan)
    out[lead:] = values
    return out


def sma(p, n: int) -> IndicatorSeries:
    """Simple moving average of the last ``n`` values."""
    if n < 1:
        raise ValueError("window must be at least 1")
    dates, x, warm = _unpack(p)
    body = x[warm:]
    if n > len(body):
        raise WindowExceedsSeries(f"window {n} exceeds {len(body)} defined values")
    means = sliding_window_view(body, n).mean(axis=1)
    return IndicatorSeries(dates, _pad(means, warm + n - 1, len(x)), warm + n - 1)


def ema(p, n: int) -> IndicatorSeries:
    """Exponential moving average with ``alpha = 2 / (n + 1)`` seeded by the first value.

    The seed makes every entry defined, so a span longer than the series is allowed.
    """
    if n < 1:
        raise ValueError("span must be at least 1")
    dates, x, warm = _unpack(p)
    body = x[warm:]
    if len(body) == 0:
        raise WindowExceedsSeries("EMA of an empty series")
    alpha = 2.0 / (n + 1.0)
    out = np.empty(len(body))
    acc = body[0]
    for i, v in enumerate(body):
        acc = alpha * v + (1.0 - alpha) * acc if i else v
        out[i] = acc
    return IndicatorSeries(dates, _pad(out, warm, len(x)), warm)


def triangular_ma(p, n: int) -> IndicatorSeries:
    """Triangular moving average: an SMA of an SMA with half-length windows."""
    if n < 2:
        raise ValueError("period must be at least 2")
    first = (n + 2) // 2  # ceil((n + 1) / 2)
    second = n // 2 + 1
    dates, x, warm = _unpack(p)
    if first + second - 1 > len(x) - warm:
        raise WindowExceedsSeries(f"TMA period {n} needs {first + second - 1} values, got {len(x) - warm}")
    return sma(sma(p, first), second)


def true_range(p: PriceSeries) -> np.ndarray:
    """True range per bar from the second bar on (length ``len(p) - 1``).

    Bars lacking high or low fall back to the absolute close-to-close change.
    """
    prev = p.close[:-1]
    high = np.where(p.has_range, p.high, p.close)[1:]
    low = np.where(p.has_range, p.low, p.close)[1:]
    return np.maximum(high, prev) - np.minimum(low, prev)


def atr(p: PriceSeries, n: int = 20) -> IndicatorSeries:
    """Wilder average true range; first defined at bar ``n``."""
    if n < 1:
        raise ValueError("window must be at least 1")
    if len(p) < n + 1:
        raise WindowExceedsSeries(f"ATR({n}) needs {n + 1} bars, got {len(p)}")
    tr = true_range(p)
    out = np.full(len(p), np.nan)
    acc = tr[:n].mean()
    out[n] = acc
    for t in range(n + 1, len(p)):
        acc = (acc * (n - 1) + tr[t - 1]) / n
        out[t] = acc
    return IndicatorSeries(p.dates, out, n)


def keltner(p: PriceSeries, ma: IndicatorSeries, atr_series: IndicatorSeries, mult: float = 1.0) -> Band:
    if mult <= 0:
        raise ValueError("mult must be positive")
    if not (len(p) == len(ma) == len(atr_series)):
        raise LengthMismatch("price, moving average and ATR must have equal length")
    width = atr_series * mult
    return Band(ma - width, ma + atr_series * 0.0, ma + width)


def bollinger(p, n: int = 20, k: float = 2.0) -> Band:
    """SMA bands at plus/minus ``k`` rolling population standard deviations."""
    if n < 2:
        raise ValueError("window must be at least 2")
    if k <= 0:
        raise ValueError("k must be positive")
    dates, x, warm = _unpack(p)
    body = x[warm:]
    if n > len(body):
        raise WindowExceedsSeries(f"window {n} exceeds {len(body)} defined values")
    windows = sliding_window_view(body, n)
    mid = windows.mean(axis=1)
    sd = windows.std(axis=1)
    lead = warm + n - 1

    def series(v):
        return IndicatorSeries(dates, _pad(v, lead, len(x)), lead)

    return Band(series(mid - k * sd), series(mid), series(mid + k * sd))


def rsi(p, n: int = 14) -> IndicatorSeries:
    """Wilder relative strength index, defined from index ``n``.

    A window with no losses scores 100, one with no gains 0, and a window
    with neither 50.
    """
    if n < 1:
        raise ValueError("period must be at least 1")
    dates, x, warm = _unpack(p)
    body = x[warm:]
    if len(body) <= n:
        raise WindowExceedsSeries(f"RSI({n}) needs more than {n} values, got {len(body)}")
    delta = np.diff(body)
    gains = np.clip(delta, 0.0, None)
    losses = np.clip(-delta, 0.0, None)
    out = np.full(len(body), np.nan)
    g = gains[:n].mean()
    l = losses[:n].mean()
    for t in range(n, len(body)):
        if t > n:
            g = (g * (n - 1) + gains[t - 1]) / n
            l = (l * (n - 1) + losses[t - 1]) / n
        if l == 0.0:
            out[t] = 50.0 if g == 0.0 else 100.0
        else:
            out[t] = 100.0 - 100.0 / (1.0 + g / l)
    return IndicatorSeries(dates, _pad(out, warm, len(x)), warm + n)


def macd(p, fast: int = 12, slow: int = 26, signal: int = 9):
    """(macd_line, signal_line, histogram)."""
    if min(fast, slow, signal) < 1 or fast >= slow:
        raise InvalidSpans(f"need 1 <= fast < slow and signal >= 1, got ({fast}, {slow}, {signal})")
    line = ema(p, fast) - ema(p, slow)
    sig = ema(line, signal)
    return line, sig, line - sig


def swing_extremes(p, lookback: int = 60):
    """(swing_high, swing_low): rolling max and min over the trailing ``lookback`` values."""
    if lookback < 2:
        raise ValueError("lookback must be at least 2")
    dates, x, warm = _unpack(p)
    body = x[warm:]
    if lookback > len(body):
        raise WindowExceedsSeries(f"lookback {lookback} exceeds {len(body)} defined values")
    windows = sliding_window_view(body, lookback)
    lead = warm + lookback - 1
    high = IndicatorSeries(dates, _pad(windows.max(axis=1), lead, len(x)), lead)
    low = IndicatorSeries(dates, _pad(windows.min(axis=1), lead, len(x)), lead)
    return high, low


def fib_levels(swing_low: float, swing_high: float, ratios=FIB_RATIOS) -> dict[float, float]:
    """Retracement levels measured down from the swing high: ``high - r * (high - low)``."""
    if swing_high < swing_low:
        raise InvertedSwing(f"swing high {swing_high} below swing low {swing_low}")
    span = swing_high - swing_low
    return {r: swing_high - r * span for r in ratios}


def fib_series(swing_high: IndicatorSeries, swing_low: IndicatorSeries, ratio: float) -> IndicatorSeries:
    """The ``ratio`` retracement level recomputed on every bar from rolling swing extremes."""
    return swing_high - (swing_high - swing_low) * ratio


def write_indicator_csv(series: Union[IndicatorSeries, Band], path) -> None:
    """Dump ``(date, value)`` or ``(date, lower, middle, upper)``; undefined entries are blank."""

    def fmt(x):
        return "" if np.isnan(x) else repr(float(x))

    if isinstance(series, Band):
        header = ["date", "lower", "middle", "upper"]
        dates = series.middle.dates
        cols = [series.lower.values, series.middle.values, series.upper.values]
    else:
        header = ["date", "value"]
        dates = series.dates
        cols = [series.values]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, d in enumerate(dates):
            writer.writerow([str(d)] + [fmt(c[i]) for c in cols])
