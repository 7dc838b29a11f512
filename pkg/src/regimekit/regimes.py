"""Trend labelling, four-way market regimes and regime statistics.

The trend label follows a Keltner-channel hysteresis around a long triangular
moving average: it turns Bullish only once the close clears the upper channel
and Bearish only once it falls through the lower one.  Crossed with the
variance label this gives the four regimes:

    Bullish + LowVar  -> Advance        Bullish + HighVar -> Accumulation
    Bearish + HighVar -> Decline        Bearish + LowVar  -> Distribution
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from regimekit.data import PriceSeries, ReturnSeries, common_dates
from regimekit.errors import InsufficientHistory, LengthMismatch, WindowExceedsSeries
from regimekit.indicators import atr, triangular_ma
from regimekit.labels import LabelSeries, Regime, Trend, Variance


@dataclass(frozen=True)
class RegimeSegment:
    label: Regime
    start: np.datetime64
    end: np.datetime64
    length: int


@dataclass(frozen=True)
class RegimeStats:
    mean_return: float
    std_return: float
    days: int
    mean_segment_length: float


def trend_regime(p: PriceSeries, tma_n: int = 250, atr_n: int = 20, mult: float = 1.0) -> LabelSeries:
    """Bullish/Bearish labels from the first date where both TMA and ATR are defined."""
    if mult <= 0:
        raise ValueError("mult must be positive")
    try:
        tma = triangular_ma(p, tma_n)
        rng = atr(p, atr_n)
    except WindowExceedsSeries as exc:
        raise InsufficientHistory(f"{p.symbol}: {exc}") from exc
    start = max(tma.warmup, rng.warmup)
    if start >= len(p):
        raise InsufficientHistory(f"{p.symbol}: no bar after the {start}-bar warm-up")

    close = p.close[start:]
    mid = tma.values[start:]
    upper = mid + mult * rng.values[start:]
    lower = mid - mult * rng.values[start:]
    state = Trend.BULLISH if close[0] >= mid[0] else Trend.BEARISH
    labels = []
    for c, hi, lo in zip(close, upper, lower):
        if c > hi:
            state = Trend.BULLISH
        elif c < lo:
            state = Trend.BEARISH
        labels.append(state)
    return LabelSeries(p.dates[start:], labels)


def combine(trend: LabelSeries, variance: LabelSeries) -> LabelSeries:
    """Per-date four-way mapping of (trend, variance) pairs."""
    if len(trend) != len(variance) or not np.array_equal(trend.dates, variance.dates):
        raise LengthMismatch("trend and variance labels must share the same dates")
    return LabelSeries(trend.dates, [Regime.from_parts(t, v) for t, v in zip(trend.values, variance.values)])


def regime_labels(trend: LabelSeries, variance: LabelSeries, lag: int = 0) -> LabelSeries:
    """Join trend and variance labels on common dates, optionally lagging the variance label.

    With ``lag=1`` the variance label used on date t is the one available at
    the close of t - 1, which keeps the regime tradeable without look-ahead.
    """
    variance = variance.lagged(lag)
    dates = common_dates(trend.dates, variance.dates)
    return combine(trend.restrict(dates), variance.restrict(dates))


def segments(labels: LabelSeries) -> tuple[list[RegimeSegment], dict[str, float]]:
    """Maximal constant-label runs and descriptive statistics of their lengths."""
    if len(labels) == 0:
        raise ValueError("no labels to segment")
    values = labels.values
    breaks = [0] + [i for i in range(1, len(values)) if values[i] != values[i - 1]] + [len(values)]
    segs = [
        RegimeSegment(values[a], labels.dates[a], labels.dates[b - 1], b - a)
        for a, b in zip(breaks[:-1], breaks[1:])
    ]
    lengths = np.array([s.length for s in segs], dtype=float)
    stats = {
        "count": len(segs),
        "mean": float(lengths.mean()),
        "std": float(lengths.std(ddof=1)) if len(segs) > 1 else float("nan"),
        "min": float(lengths.min()),
        "25%": float(np.percentile(lengths, 25)),
        "50%": float(np.percentile(lengths, 50)),
        "75%": float(np.percentile(lengths, 75)),
        "max": float(lengths.max()),
    }
    return segs, stats


def regime_return_stats(returns: ReturnSeries, labels: LabelSeries) -> dict[Regime, RegimeStats]:
    """Mean, standard deviation and day count of returns inside each regime.

    Regimes with no days are absent from the result.
    """
    dates = common_dates(returns.dates, labels.dates)
    r = returns.restrict(dates).values
    lab = labels.restrict(dates)
    segs, _ = segments(labels)
    out = {}
    for regime in Regime:
        sample = r[lab.mask(regime)]
        if len(sample) == 0:
            continue
        lengths = [s.length for s in segs if s.label == regime]
        out[regime] = RegimeStats(
            mean_return=float(sample.mean()),
            std_return=float(sample.std(ddof=1)) if len(sample) > 1 else float("nan"),
            days=len(sample),
            mean_segment_length=float(np.mean(lengths)),
        )
    return out


def write_regimes_csv(labels: LabelSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "trend", "variance", "regime"])
        for d, regime in zip(labels.dates, labels.values):
            writer.writerow([str(d), regime.trend.value, regime.variance.value, regime.value])


def read_regimes_csv(path) -> LabelSeries:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return LabelSeries([r["date"] for r in rows], [Regime(r["regime"]) for r in rows])


def write_segments_csv(segs: list[RegimeSegment], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "start", "end", "length"])
        for s in segs:
            writer.writerow([s.label.value, str(s.start), str(s.end), s.length])


def read_segments_csv(path) -> list[RegimeSegment]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        RegimeSegment(Regime(r["label"]), np.datetime64(r["start"], "D"), np.datetime64(r["end"], "D"), int(r["length"]))
        for r in rows
    ]


def variance_labels_from_probs(dates, p_high, threshold: float = 0.5) -> LabelSeries:
    high = np.asarray(p_high) > threshold
    return LabelSeries(dates, [Variance.HIGH if h else Variance.LOW for h in high])
