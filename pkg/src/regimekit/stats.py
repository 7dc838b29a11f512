"""Twelve-statistic performance report.

Annualisation uses 252 trading days.  Sharpe is CAGR over annualised risk
with no risk-free rate, which is the definition the published result tables
satisfy row by row.  Ratios whose denominator is zero are reported as absent
(``None``) rather than infinite.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from regimekit.errors import NonPositiveEquity, ZeroRisk

TRADING_DAYS = 252

# Row names of the published statistic table; JSON keys are their snake_case forms.
STAT_NAMES = {
    "cagr_pct": "CAGR %",
    "ann_risk_pct": "Annualized Risk %",
    "sharpe_pct": "Sharpe %",
    "win_pct": "Win %",
    "num_trades": "Number of Trades",
    "win_loss_ratio_pct": "Win to Loss Ratio %",
    "avg_daily_pl": "Daily PL $",
    "daily_return_bps": "Daily Return bps (total)",
    "max_consec_losers": "Max Consecutive Losers",
    "max_drawdown_pct": "Max Drawdown %",
    "lake_ratio": "Lake Ratio",
    "gain_to_pain_ratio": "Gain to Pain Ratio",
}


def snake_case(name: str) -> str:
    name = name.replace("%", " pct").replace("$", " usd")
    return re.sub(r"[^0-9a-z]+", "_", name.lower()).strip("_")


@dataclass(frozen=True)
class PerfReport:
    cagr_pct: float
    ann_risk_pct: float
    sharpe_pct: Optional[float]
    win_pct: Optional[float]
    num_trades: int
    win_loss_ratio_pct: Optional[float]
    avg_daily_pl: float
    daily_return_bps: float
    max_consec_losers: int
    max_drawdown_pct: float
    lake_ratio: float
    gain_to_pain_ratio: Optional[float]

    def to_json_dict(self) -> dict:
        return {snake_case(STAT_NAMES[k]): v for k, v in asdict(self).items()}

    def table(self) -> list[tuple[str, object]]:
        return [(STAT_NAMES[k], v) for k, v in asdict(self).items()]


def _equity(equity) -> np.ndarray:
    return np.asarray(getattr(equity, "equity", equity), dtype=float)


def daily_returns(equity) -> np.ndarray:
    e = _equity(equity)
    return e[1:] / e[:-1] - 1.0


def cagr(equity) -> float:
    e = _equity(equity)
    if len(e) < 2:
        raise ValueError("CAGR needs at least two equity points")
    if e[0] <= 0 or e[-1] <= 0:
        raise NonPositiveEquity(f"equity must stay positive (start {e[0]}, end {e[-1]})")
    days = len(e) - 1
    return float(((e[-1] / e[0]) ** (TRADING_DAYS / days) - 1.0) * 100.0)


def ann_risk(equity) -> float:
    r = daily_returns(equity)
    if len(r) < 2:
        raise ValueError("annualised risk needs at least three equity points")
    return float(np.std(r, ddof=1) * math.sqrt(TRADING_DAYS) * 100.0)


def sharpe(cagr_pct: float, ann_risk_pct: float) -> float:
    if ann_risk_pct <= 0:
        raise ZeroRisk("annualised risk is zero")
    return float(100.0 * cagr_pct / ann_risk_pct)


def _net(trades) -> list[float]:
    return [t if isinstance(t, (int, float)) else t.net for t in trades]


def trade_stats(trades: Sequence) -> dict:
    """Win rate, trade count, winners-to-losers ratio and longest losing streak.

    ``trades`` are Trade objects (ordered by entry) or bare net P&L numbers.
    Break-even trades count as losses.
    """
    pnl = _net(trades)
    winners = sum(1 for x in pnl if x > 0)
    losers = len(pnl) - winners
    streak = longest = 0
    for x in pnl:
        streak = streak + 1 if x <= 0 else 0
        longest = max(longest, streak)
    return {
        "win_pct": 100.0 * winners / len(pnl) if pnl else None,
        "num_trades": len(pnl),
        "win_loss_ratio_pct": 100.0 * winners / losers if losers else None,
        "max_consec_losers": longest,
    }


def max_drawdown(equity) -> float:
    e = _equity(equity)
    peak = np.maximum.accumulate(e)
    return float(np.min(e / peak - 1.0) * 100.0)


def lake_ratio(equity) -> float:
    """Area between the running peak and the curve over the area under the curve, times 100."""
    e = _equity(equity)
    peak = np.maximum.accumulate(e)
    return float(100.0 * np.sum(peak - e) / np.sum(e))


def gain_to_pain(trades: Sequence) -> Optional[float]:
    pnl = np.asarray(_net(trades), dtype=float)
    pain = -pnl[pnl < 0].sum()
    if pain == 0:
        return None
    return float(100.0 * pnl[pnl > 0].sum() / pain)


def daily_pl_stats(result) -> dict:
    """Mean daily currency P&L and mean daily equity return in basis points."""
    e = _equity(result)
    if len(e) < 2:
        return {"avg_daily_pl": 0.0, "daily_return_bps": 0.0}
    return {
        "avg_daily_pl": float(np.mean(np.diff(e))),
        "daily_return_bps": float(1e4 * np.mean(daily_returns(e))),
    }


def report(result) -> PerfReport:
    """All twelve statistics for a :class:`~regimekit.backtest.BacktestResult`."""
    e = _equity(result)
    c = cagr(e)
    risk = ann_risk(e)
    ts = trade_stats(result.trades)
    pl = daily_pl_stats(e)
    return PerfReport(
        cagr_pct=c,
        ann_risk_pct=risk,
        sharpe_pct=sharpe(c, risk) if risk > 0 else None,
        win_pct=ts["win_pct"],
        num_trades=ts["num_trades"],
        win_loss_ratio_pct=ts["win_loss_ratio_pct"],
        avg_daily_pl=pl["avg_daily_pl"],
        daily_return_bps=pl["daily_return_bps"],
        max_consec_losers=ts["max_consec_losers"],
        max_drawdown_pct=max_drawdown(e),
        lake_ratio=lake_ratio(e),
        gain_to_pain_ratio=gain_to_pain(result.trades),
    )


def save_report(rep: PerfReport, path) -> None:
    Path(path).write_text(json.dumps(rep.to_json_dict(), indent=2) + "\n", encoding="utf-8")
