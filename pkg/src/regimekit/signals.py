"""Crossing events and regime-conditioned forward return paths.

A crossing needs a strict inequality on both sides: the series must have been
strictly below (above) the reference at its last unequal observation and be
strictly above (below) it now.  Touching the reference and turning back is not
a crossing, and a flat touch followed by continuation fires once, on the bar
that leaves equality.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from regimekit.data import PriceSeries, ReturnSeries
from regimekit.errors import LengthMismatch, NoOverlap
from regimekit.indicators import IndicatorSeries, bollinger, fib_series, macd, rsi, swing_extremes
from regimekit.labels import LabelSeries, Regime


class CrossKind(str, enum.Enum):
    ABOVE = "CrossAbove"
    BELOW = "CrossBelow"


@dataclass(frozen=True)
class CrossEvent:
    date: np.datetime64
    kind: CrossKind
    subject: str
    regime: Optional[Regime]
    index: int


@dataclass(frozen=True)
class ForwardPath:
    horizon: int
    mean_path: np.ndarray  # offsets 0..horizon, entry 0 is 0
    counts: np.ndarray  # events contributing at each offset
    n_events: int


def _values(x, n=None) -> tuple[Optional[np.ndarray], np.ndarray]:
    if isinstance(x, PriceSeries):
        return x.dates, x.close
    if isinstance(x, IndicatorSeries):
        return x.dates, x.values
    if np.isscalar(x):
        return None, np.full(n, float(x))
    return None, np.asarray(x, dtype=float)


def crossing_flags(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (cross_above, cross_below) arrays under the strict tie rule.

    A NaN on either side forgets the remembered side.
    """
    n = len(a)
    above = np.zeros(n, dtype=bool)
    below = np.zeros(n, dtype=bool)
    side = 0
    diff = a - b
    for t in range(n):
        d = diff[t]
        if np.isnan(d):
            side = 0
            continue
        if d == 0.0:
            continue
        now = 1 if d > 0 else -1
        if side == -1 and now == 1:
            above[t] = True
        elif side == 1 and now == -1:
            below[t] = True
        side = now
    return above, below


def detect_crossings(
    series_a: Union[IndicatorSeries, PriceSeries, np.ndarray],
    series_b: Union[IndicatorSeries, float],
    regime: Optional[LabelSeries] = None,
    subject: str = "",
) -> list[CrossEvent]:
    """Crossings of ``series_a`` through ``series_b`` (a series or a constant threshold)."""
    dates, a = _values(series_a)
    _, b = _values(series_b, len(a))
    if len(a) != len(b):
        raise LengthMismatch(f"series lengths differ: {len(a)} vs {len(b)}")
    if dates is None:
        dates = np.arange(len(a)).astype("datetime64[D]")
    if not np.any(~np.isnan(a) & ~np.isnan(b)):
        raise NoOverlap(f"{subject or 'series'}: no date where both sides are defined")
    above, below = crossing_flags(a, b)
    tags = regime.lookup(dates) if regime is not None else np.full(len(a), None, dtype=object)
    events = []
    for t in np.flatnonzero(above | below):
        kind = CrossKind.ABOVE if above[t] else CrossKind.BELOW
        events.append(CrossEvent(dates[t], kind, subject, tags[t], int(t)))
    return events


def forward_paths(
    events: list[CrossEvent],
    returns: ReturnSeries,
    labels: LabelSeries,
    horizon: int = 30,
) -> dict[tuple[str, CrossKind, Regime], ForwardPath]:
    """Average compounded return path after each event, grouped by (subject, kind, regime).

    A path runs from the event close until ``horizon`` days have passed, the
    regime label changes, or the data ends.  Events outside labelled dates
    are ignored.
    """
    simple = returns.simple()
    ret_labels = labels.lookup(returns.dates)
    sums: dict = {}
    for ev in events:
        if ev.regime is None:
            continue
        key = (ev.subject, ev.kind, ev.regime)
        acc = sums.setdefault(key, [np.zeros(horizon + 1), np.zeros(horizon + 1, dtype=int), 0])
        acc[2] += 1
        start = int(np.searchsorted(returns.dates, ev.date, side="right"))
        growth = 1.0
        acc[1][0] += 1
        for k in range(1, horizon + 1):
            i = start + k - 1
            if i >= len(simple) or ret_labels[i] != ev.regime:
                break
            growth *= 1.0 + simple[i]
            acc[0][k] += growth - 1.0
            acc[1][k] += 1
    out = {}
    for key, (total, counts, n) in sums.items():
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(counts > 0, total / np.maximum(counts, 1), np.nan)
        out[key] = ForwardPath(horizon, mean, counts, n)
    return out


def standard_subjects(p: PriceSeries, bb_n: int = 20, bb_k: float = 1.5, rsi_n: int = 14,
                      fib_lookback: int = 60, macd_spans=(12, 26, 9)) -> list[tuple[str, object, object]]:
    """The indicator pairs studied for forward paths: (name, series, reference)."""
    band = bollinger(p, bb_n, bb_k)
    strength = rsi(p, rsi_n)
    hi, lo = swing_extremes(p, fib_lookback)
    line, sig, _ = macd(p, *macd_spans)
    return [
        ("close~bollinger_upper", p, band.upper),
        ("close~bollinger_lower", p, band.lower),
        ("close~fib_0.382", p, fib_series(hi, lo, 0.382)),
        ("close~fib_0.618", p, fib_series(hi, lo, 0.618)),
        ("macd~signal", line, sig),
        ("rsi~30", strength, 30.0),
        ("rsi~60", strength, 60.0),
        ("rsi~70", strength, 70.0),
    ]


def analyse_signals(p: PriceSeries, returns: ReturnSeries, labels: LabelSeries, horizon: int = 30, **params):
    events = []
    for name, a, b in standard_subjects(p, **params):
        events.extend(detect_crossings(a, b, labels, name))
    return events, forward_paths(events, returns, labels, horizon)


def write_paths_csv(paths: dict, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject", "kind", "regime", "offset", "mean_cum_return", "n_events"])
        for (subject, kind, regime) in sorted(paths, key=lambda k: (k[0], k[1].value, k[2].value)):
            fp = paths[(subject, kind, regime)]
            for offset, (value, count) in enumerate(zip(fp.mean_path, fp.counts)):
                if count == 0:
                    break
                writer.writerow([subject, kind.value, regime.value, offset, repr(float(value)), int(count)])
