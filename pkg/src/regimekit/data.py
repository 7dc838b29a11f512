"""Price-series containers, CSV ingestion and return transforms.

Series are stored column-wise as numpy arrays.  Dates are ``datetime64[D]``
(daily bars, no timezone) and missing ``open``/``high``/``low`` values are NaN,
which makes close-only bars first-class.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Literal, Mapping, Optional, Sequence

import numpy as np

from regimekit.errors import (
    DuplicateDate,
    EmptyIntersection,
    InvalidBar,
    LengthMismatch,
    MissingColumn,
    NonPositivePrice,
    SeriesTooShort,
    UnparseableDate,
)

logger = logging.getLogger(__name__)

ReturnKind = Literal["log", "simple"]

CANONICAL_COLUMNS = ("date", "open", "high", "low", "close")


@dataclass(frozen=True)
class Bar:
    date: date
    close: float
    open: Optional[float] = None
    high: Optional[float] = None
    low: Optional[float] = None

    def __post_init__(self):
        _check_bar(self.close, self.open, self.high, self.low)


def _check_bar(close, open_=None, high=None, low=None, row=None):
    where = f" (row {row})" if row is not None else ""
    if not (close > 0 and math.isfinite(close)):
        raise NonPositivePrice(f"close must be positive and finite, got {close}{where}", row=row)
    for name, value in (("open", open_), ("high", high), ("low", low)):
        if value is not None and not (value > 0 and math.isfinite(value)):
            raise NonPositivePrice(f"{name} must be positive and finite, got {value}{where}", row=row)
    body = [close] if open_ is None else [open_, close]
    if high is not None and max(body) > high:
        raise InvalidBar(f"high {high} below bar body {body}{where}", row=row)
    if low is not None and min(body) < low:
        raise InvalidBar(f"low {low} above bar body {body}{where}", row=row)


def _as_dates(values) -> np.ndarray:
    return np.asarray(values, dtype="datetime64[D]")


def _optional(values, n):
    if values is None:
        return np.full(n, np.nan)
    return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class PriceSeries:
    """Date-ordered daily bars for one symbol.

    Construct with the column arrays; ``open``, ``high`` and ``low`` may be
    omitted entirely or contain NaN for individual close-only bars.
    """

    symbol: str
    dates: np.ndarray
    close: np.ndarray
    open: np.ndarray = None
    high: np.ndarray = None
    low: np.ndarray = None

    def __post_init__(self):
        dates = _as_dates(self.dates)
        close = np.asarray(self.close, dtype=float)
        n = len(close)
        if n == 0:
            raise SeriesTooShort("a price series needs at least one bar")
        if len(dates) != n:
            raise LengthMismatch(f"{len(dates)} dates but {n} closes")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "close", close)
        for name in ("open", "high", "low"):
            arr = _optional(getattr(self, name), n)
            if len(arr) != n:
                raise LengthMismatch(f"{name} has {len(arr)} values for {n} closes")
            object.__setattr__(self, name, arr)
        if n > 1:
            steps = np.diff(dates).astype(int)
            if np.any(steps == 0):
                i = int(np.flatnonzero(steps == 0)[0]) + 1
                raise DuplicateDate(f"duplicate date {dates[i]}", row=i + 1)
            if np.any(steps < 0):
                raise ValueError("dates must be strictly increasing")
        if np.any(~(close > 0)) or not np.all(np.isfinite(close)):
            i = int(np.flatnonzero(~((close > 0) & np.isfinite(close)))[0])
            raise NonPositivePrice(f"close must be positive, got {close[i]} at {dates[i]}", row=i + 1)
        for arr in (self.open, self.high, self.low):
            bad = ~np.isnan(arr) & ~(arr > 0)
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise NonPositivePrice(f"non-positive price {arr[i]} at {dates[i]}", row=i + 1)
        top = np.fmax(self.open, close)
        bottom = np.fmin(self.open, close)
        if np.any(self.high < top) or np.any(self.low > bottom):
            i = int(np.flatnonzero((self.high < top) | (self.low > bottom))[0])
            raise InvalidBar(f"high/low do not bracket the bar body at {dates[i]}", row=i + 1)

    def __len__(self) -> int:
        return len(self.close)

    @property
    def has_range(self) -> np.ndarray:
        """Per-bar flag: True where both high and low are present."""
        return ~np.isnan(self.high) & ~np.isnan(self.low)

    @property
    def bars(self) -> list[Bar]:
        def opt(x):
            return None if np.isnan(x) else float(x)

        return [
            Bar(d.item(), float(c), opt(o), opt(h), opt(l))
            for d, c, o, h, l in zip(self.dates, self.close, self.open, self.high, self.low)
        ]

    @classmethod
    def from_bars(cls, symbol: str, bars: Iterable[Bar]) -> "PriceSeries":
        bars = sorted(bars, key=lambda b: b.date)

        def col(name):
            return [np.nan if getattr(b, name) is None else getattr(b, name) for b in bars]

        return cls(
            symbol,
            [b.date for b in bars],
            [b.close for b in bars],
            col("open"),
            col("high"),
            col("low"),
        )

    def take(self, index) -> "PriceSeries":
        """Sub-series at integer positions or a boolean mask."""
        return PriceSeries(
            self.symbol,
            self.dates[index],
            self.close[index],
            self.open[index],
            self.high[index],
            self.low[index],
        )

    def restrict(self, dates: np.ndarray) -> "PriceSeries":
        """Sub-series on the given dates (which must all be present)."""
        return self.take(np.isin(self.dates, _as_dates(dates)))


@dataclass(frozen=True)
class ReturnSeries:
    symbol: str
    dates: np.ndarray
    values: np.ndarray
    kind: ReturnKind = "log"

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_dates(self.dates))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if len(self.dates) != len(self.values):
            raise ValueError("dates and values differ in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("returns must be finite")

    def __len__(self) -> int:
        return len(self.values)

    def simple(self) -> np.ndarray:
        """Values as simple returns regardless of the stored kind."""
        return np.expm1(self.values) if self.kind == "log" else self.values.copy()

    def restrict(self, dates: np.ndarray) -> "ReturnSeries":
        mask = np.isin(self.dates, _as_dates(dates))
        return ReturnSeries(self.symbol, self.dates[mask], self.values[mask], self.kind)


def _parse_date(text: str, fmt: Optional[str], row: int) -> np.datetime64:
    text = text.strip()
    try:
        if fmt:
            parsed = datetime.strptime(text, fmt).date()
        else:
            parsed = date.fromisoformat(text[:10])
    except ValueError as exc:
        raise UnparseableDate(f"cannot parse date {text!r} (row {row})", row=row) from exc
    return np.datetime64(parsed, "D")


def _parse_price(text: Optional[str], name: str, row: int) -> float:
    if text is None or text.strip() in ("", "null", "NaN", "nan", "NA"):
        return np.nan
    try:
        return float(text)
    except ValueError as exc:
        raise NonPositivePrice(f"{name} is not a number: {text!r} (row {row})", row=row) from exc


def parse_price_csv(
    path,
    column_map: Optional[Mapping[str, str]] = None,
    date_format: Optional[str] = None,
    symbol: Optional[str] = None,
) -> PriceSeries:
    """Read a daily price CSV into a validated, date-sorted :class:`PriceSeries`.

    Args:
        path: CSV file with a header row.
        column_map: maps canonical names (``date``, ``open``, ``high``, ``low``,
            ``close``) to header names in the file; unmapped names are looked
            up case-insensitively as themselves.
        date_format: ``strptime`` format; ISO-8601 when omitted.
        symbol: series identifier, defaults to the file stem.

    Row numbers in error messages count data rows from 1 (the header is not
    counted).  Rows without a close are dropped with a warning.
    """
    path = Path(path)
    column_map = dict(column_map or {})
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = list(reader)
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if header is None or not rows:
        raise SeriesTooShort(f"{path}: no data rows")

    lookup = {name.strip().lower(): i for i, name in enumerate(header)}
    index = {}
    for canon in CANONICAL_COLUMNS:
        wanted = column_map.get(canon, canon).strip().lower()
        if wanted in lookup:
            index[canon] = lookup[wanted]
        elif canon in ("date", "close"):
            raise MissingColumn(f"{path}: no {canon!r} column (looked for {wanted!r})")

    records = []
    seen = {}
    for row_no, row in enumerate(rows, start=1):
        cells = {c: (row[i] if i < len(row) else None) for c, i in index.items()}
        day = _parse_date(cells["date"] or "", date_format, row_no)
        close = _parse_price(cells["close"], "close", row_no)
        if np.isnan(close):
            logger.warning("%s: row %d has no close, dropped", path, row_no)
            continue
        extras = [_parse_price(cells.get(c), c, row_no) for c in ("open", "high", "low")]
        opt = [None if np.isnan(v) else v for v in extras]
        _check_bar(close, *opt, row=row_no)
        if day in seen:
            raise DuplicateDate(f"{path}: date {day} repeated (rows {seen[day]} and {row_no})", row=row_no)
        seen[day] = row_no
        records.append((day, close, *extras))

    if not records:
        raise SeriesTooShort(f"{path}: no rows with a close price")
    records.sort(key=lambda r: r[0])
    cols = list(zip(*records))
    return PriceSeries(symbol or path.stem, cols[0], cols[1], cols[2], cols[3], cols[4])


def write_price_csv(series: PriceSeries, path) -> None:
    """Write ``series`` in the canonical schema; floats keep full precision."""

    def fmt(x):
        return "" if np.isnan(x) else repr(float(x))

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANONICAL_COLUMNS)
        for d, o, h, l, c in zip(series.dates, series.open, series.high, series.low, series.close):
            writer.writerow([str(d), fmt(o), fmt(h), fmt(l), fmt(c)])


def to_returns(p: PriceSeries, kind: ReturnKind = "log") -> ReturnSeries:
    """Close-to-close returns, each dated by the later bar."""
    if len(p) < 2:
        raise SeriesTooShort(f"{p.symbol}: need at least 2 bars for returns, got {len(p)}")
    if kind == "log":
        values = np.diff(np.log(p.close))
    elif kind == "simple":
        values = p.close[1:] / p.close[:-1] - 1.0
    else:
        raise ValueError(f"unknown return kind {kind!r}")
    return ReturnSeries(p.symbol, p.dates[1:], values, kind)


def common_dates(*date_arrays: Sequence) -> np.ndarray:
    dates = _as_dates(date_arrays[0])
    for other in date_arrays[1:]:
        dates = np.intersect1d(dates, _as_dates(other))
    return dates


def align(a: PriceSeries, b: PriceSeries) -> tuple[PriceSeries, PriceSeries]:
    """Restrict both series to their common dates."""
    dates = common_dates(a.dates, b.dates)
    if len(dates) == 0:
        raise EmptyIntersection(f"{a.symbol} and {b.symbol} share no dates")
    return a.restrict(dates), b.restrict(dates)
