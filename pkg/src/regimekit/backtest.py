"""Close-price backtester with per-leg costs and full-equity reinvestment.

Position changes execute at the close of the signal bar.  Slippage moves each
leg's execution price against the trader (buys pay ``close * (1 + s)``, sells
receive ``close * (1 - s)``); transaction and commission basis points are then
charged on the traded notional.  Every entry sizes the position to the whole
current equity, fractional units allowed.  Shorts are marked symmetrically and
accrue no borrow cost.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from regimekit.data import PriceSeries
from regimekit.errors import LengthMismatch

logger = logging.getLogger(__name__)

BPS = 1e-4


@dataclass(frozen=True)
class CostModel:
    transaction_bps: float = 1.0
    slippage_bps: float = 1.0
    commission_bps: float = 1.0

    def __post_init__(self):
        if min(self.transaction_bps, self.slippage_bps, self.commission_bps) < 0:
            raise ValueError("cost basis points must be non-negative")

    @property
    def fee_rate(self) -> float:
        return (self.transaction_bps + self.commission_bps) * BPS

    @property
    def slip(self) -> float:
        return self.slippage_bps * BPS


@dataclass(frozen=True)
class Trade:
    entry_date: np.datetime64
    exit_date: np.datetime64
    direction: str
    entry_px: float
    exit_px: float
    qty: float
    gross: float
    costs: float

    @property
    def net(self) -> float:
        return self.gross - self.costs


@dataclass
class BacktestResult:
    dates: np.ndarray
    equity: np.ndarray
    daily_pl: np.ndarray
    position: np.ndarray
    trades: list = field(default_factory=list)
    capital: float = 1_000_000.0
    bankrupt: bool = False

    @property
    def final_equity(self) -> float:
        return float(self.equity[-1])


def run(p: PriceSeries, target, capital: float = 1_000_000.0, costs: CostModel = CostModel()) -> BacktestResult:
    """Turn target positions (+1 / 0 / -1 per bar) into trades and an equity curve.

    ``target`` may be an array or anything with a ``positions`` attribute.  An
    open position is force-closed at the last close; a position change into
    exposure on the last bar is ignored.  If equity reaches zero the position is
    closed at that bar, trading stops and ``bankrupt`` is set.
    """
    want = np.asarray(getattr(target, "positions", target), dtype=int)
    if len(want) != len(p):
        raise LengthMismatch(f"{len(want)} target positions for {len(p)} bars")
    if capital <= 0:
        raise ValueError("capital must be positive")
    if np.any(np.abs(want) > 1):
        raise ValueError("target positions must be -1, 0 or +1")

    n = len(p)
    close = p.close
    fee, slip = costs.fee_rate, costs.slip
    equity = np.empty(n)
    held = np.zeros(n, dtype=np.int8)
    trades = []
    cash = float(capital)
    pos, qty = 0, 0.0
    entry = None  # (date, exec price, fee paid)
    bankrupt = False

    def close_leg(t):
        nonlocal cash, pos, qty, entry
        px = close[t] * (1.0 - slip * pos)
        leg_fee = fee * qty * px
        cash += pos * qty * px - leg_fee
        d0, px0, fee0 = entry
        trades.append(Trade(d0, p.dates[t], "long" if pos > 0 else "short", float(px0), float(px),
                            float(qty), float(pos * qty * (px - px0)), float(fee0 + leg_fee)))
        pos, qty, entry = 0, 0.0, None

    def open_leg(t, side):
        nonlocal cash, pos, qty, entry
        px = close[t] * (1.0 + slip * side)
        qty = cash / px
        leg_fee = fee * cash
        cash -= side * qty * px + leg_fee
        pos = side
        entry = (p.dates[t], px, leg_fee)

    for t in range(n):
        last = t == n - 1
        goal = 0 if (bankrupt or last) else int(want[t])
        if goal != pos:
            if pos != 0:
                close_leg(t)
            if goal != 0 and not last:
                open_leg(t, goal)
        value = cash + pos * qty * close[t]
        if value <= 0 and not bankrupt:
            logger.warning("equity exhausted on %s; halting", p.dates[t])
            bankrupt = True
            if pos != 0:
                close_leg(t)
            value = cash
        equity[t] = value
        held[t] = pos

    daily_pl = np.diff(equity, prepend=capital)
    return BacktestResult(p.dates, equity, daily_pl, held, trades, float(capital), bankrupt)


def write_trades_csv(result: BacktestResult, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["entry_date", "exit_date", "direction", "entry_px", "exit_px", "qty", "gross", "costs", "net"])
        for tr in result.trades:
            writer.writerow([
                str(tr.entry_date), str(tr.exit_date), tr.direction,
                *(repr(float(x)) for x in (tr.entry_px, tr.exit_px, tr.qty, tr.gross, tr.costs, tr.net)),
            ])


def write_equity_csv(result: BacktestResult, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "equity", "position"])
        for d, e, pos in zip(result.dates, result.equity, result.position):
            writer.writerow([str(d), repr(float(e)), int(pos)])


def read_equity_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    dates = np.array([r["date"] for r in rows], dtype="datetime64[D]")
    equity = np.array([float(r["equity"]) for r in rows])
    position = np.array([int(r["position"]) for r in rows])
    return dates, equity, position
