"""Categorical per-date label series (variance, trend and market regime)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from regimekit.errors import LengthMismatch


class Variance(str, enum.Enum):
    LOW = "LowVar"
    HIGH = "HighVar"


class Trend(str, enum.Enum):
    BULLISH = "Bullish"
    BEARISH = "Bearish"


class Regime(str, enum.Enum):
    ADVANCE = "Advance"
    ACCUMULATION = "Accumulation"
    DECLINE = "Decline"
    DISTRIBUTION = "Distribution"

    @property
    def trend(self) -> Trend:
        return _REGIME_PARTS[self][0]

    @property
    def variance(self) -> Variance:
        return _REGIME_PARTS[self][1]

    @property
    def bullish(self) -> bool:
        return self.trend is Trend.BULLISH

    @classmethod
    def from_parts(cls, trend: Trend, variance: Variance) -> "Regime":
        return _PARTS_REGIME[(Trend(trend), Variance(variance))]


_REGIME_PARTS = {
    Regime.ADVANCE: (Trend.BULLISH, Variance.LOW),
    Regime.ACCUMULATION: (Trend.BULLISH, Variance.HIGH),
    Regime.DECLINE: (Trend.BEARISH, Variance.HIGH),
    Regime.DISTRIBUTION: (Trend.BEARISH, Variance.LOW),
}
_PARTS_REGIME = {parts: regime for regime, parts in _REGIME_PARTS.items()}


@dataclass(frozen=True)
class LabelSeries:
    """Dates paired with enum labels (stored as a numpy object array)."""

    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.empty(len(self.values), dtype=object)
        values[:] = list(self.values)
        if len(dates) != len(values):
            raise LengthMismatch(f"{len(dates)} dates but {len(values)} labels")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def mask(self, label) -> np.ndarray:
        return np.array([v == label for v in self.values], dtype=bool)

    def restrict(self, dates) -> "LabelSeries":
        keep = np.isin(self.dates, np.asarray(dates, dtype="datetime64[D]"))
        return LabelSeries(self.dates[keep], self.values[keep])

    def lagged(self, lag: int) -> "LabelSeries":
        """Shift labels forward by ``lag`` rows: the label at row t is the one computed at t - lag."""
        if lag <= 0:
            return self
        return LabelSeries(self.dates[lag:], self.values[:-lag])

    def lookup(self, dates) -> np.ndarray:
        """Labels on ``dates``; None where a date is not covered."""
        dates = np.asarray(dates, dtype="datetime64[D]")
        pos = np.searchsorted(self.dates, dates)
        out = np.empty(len(dates), dtype=object)
        for i, (d, p) in enumerate(zip(dates, pos)):
            out[i] = self.values[p] if p < len(self.dates) and self.dates[p] == d else None
        return out
