"""Regime-tailored rule sets and the adaptive regime switcher.

A :class:`StrategySpec` is declarative: entry and exit rules are crossings of
the close (or RSI) through an indicator level, and take-profit / stop-loss are
crossings of ``EMA + c * ATR`` levels.  Rules within a list combine by OR.

Evaluation is a per-bar state machine.  When flat, any entry rule opens a
position in the strategy's direction at that close.  When positioned, any exit
rule or a TP/SL crossing closes it; exits win over entries on the same bar and
a closed position can only be re-opened from the next bar.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from regimekit.data import PriceSeries
from regimekit.errors import InvalidStrategy, MissingIndicator
from regimekit.indicators import atr, bollinger, ema, fib_series, rsi, swing_extremes
from regimekit.labels import LabelSeries, Regime
from regimekit.signals import CrossKind, crossing_flags


class Direction(enum.IntEnum):
    LONG_ONLY = 1
    SHORT_ONLY = -1


class Subject(str, enum.Enum):
    BOLLINGER_UPPER = "bollinger_upper"
    BOLLINGER_LOWER = "bollinger_lower"
    RSI = "rsi"
    EMA = "ema"
    FIB = "fib"


@dataclass(frozen=True)
class Rule:
    """``close`` (or RSI) crosses ``cross`` through ``subject`` parameterised by ``param``.

    ``param`` is the band width in standard deviations for Bollinger rules,
    the threshold for RSI and the retracement ratio for Fibonacci.  EMA rules
    use the strategy's EMA span and ignore it.
    """

    subject: Subject
    cross: CrossKind
    param: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "subject", Subject(self.subject))
        object.__setattr__(self, "cross", CrossKind(self.cross))
        object.__setattr__(self, "param", float(self.param))

    @property
    def name(self) -> str:
        lhs = "rsi" if self.subject is Subject.RSI else "close"
        side = "above" if self.cross is CrossKind.ABOVE else "below"
        if self.subject is Subject.RSI:
            return f"{lhs} {side} {self.param:g}"
        if self.subject is Subject.EMA:
            return f"{lhs} {side} ema"
        return f"{lhs} {side} {self.subject.value}({self.param:g})"


def above(subject, param=0.0) -> Rule:
    return Rule(subject, CrossKind.ABOVE, param)


def below(subject, param=0.0) -> Rule:
    return Rule(subject, CrossKind.BELOW, param)


@dataclass(frozen=True)
class StrategySpec:
    name: str
    direction: Direction
    entries: tuple
    exits: tuple
    take_profit: float  # TP level = EMA + take_profit * ATR
    stop_loss: float  # SL level = EMA + stop_loss * ATR
    bb_window: int = 20
    rsi_period: int = 14
    ema_span: int = 10
    atr_window: int = 20
    fib_lookback: int = 60

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "exits", tuple(self.exits))
        if not self.entries or not self.exits:
            raise InvalidStrategy(f"{self.name}: entry and exit rule lists must be non-empty")
        sign = int(self.direction)
        if not (sign * self.take_profit > 0 > sign * self.stop_loss):
            raise InvalidStrategy(
                f"{self.name}: take-profit must sit on the profitable side of the EMA and stop-loss on the other"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction"] = self.direction.name
        d["entries"] = [_rule_dict(r) for r in self.entries]
        d["exits"] = [_rule_dict(r) for r in self.exits]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "StrategySpec":
        d = dict(d)
        d["direction"] = Direction[d["direction"]]
        d["entries"] = tuple(Rule(**r) for r in d["entries"])
        d["exits"] = tuple(Rule(**r) for r in d["exits"])
        return cls(**d)


def _rule_dict(r: Rule) -> dict:
    return {"subject": r.subject.value, "cross": r.cross.value, "param": r.param}


def save_spec(spec: StrategySpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_spec(path) -> StrategySpec:
    return StrategySpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


B_UP, B_LO, RSI, EMA, FIB = Subject


def builtin_specs() -> dict[Regime, StrategySpec]:
    """The four regime strategies.

    The advance and accumulation exit list reads "RSI crosses below 70" in the
    source rule list; the overbought exit is implemented as crossing *above* 70.
    """
    advance = StrategySpec(
        name=Regime.ADVANCE.value,
        direction=Direction.LONG_ONLY,
        entries=(below(B_LO, 1.5), below(RSI, 40), below(FIB, 0.382)),
        exits=(above(B_UP, 1.5), above(RSI, 70), below(EMA), below(FIB, 0.618)),
        take_profit=3.0,
        stop_loss=-3.0,
    )
    accumulation = StrategySpec(
        name=Regime.ACCUMULATION.value,
        direction=Direction.LONG_ONLY,
        entries=(below(B_LO, 1.0), below(RSI, 40), below(FIB, 0.382)),
        exits=(above(B_UP, 1.5), above(RSI, 70), below(EMA), below(FIB, 0.618)),
        take_profit=3.0,
        stop_loss=-2.0,
    )
    decline = StrategySpec(
        name=Regime.DECLINE.value,
        direction=Direction.SHORT_ONLY,
        entries=(above(B_UP, 1.5), above(RSI, 60), above(EMA), above(FIB, 0.618)),
        exits=(below(B_LO, 1.0), below(RSI, 20), below(EMA)),
        take_profit=-5.0,
        stop_loss=5.0,
    )
    distribution = StrategySpec(
        name=Regime.DISTRIBUTION.value,
        direction=Direction.SHORT_ONLY,
        entries=(above(B_UP, 1.5), above(RSI, 60), above(FIB, 0.618)),
        exits=(above(B_UP, 1.0), below(RSI, 20)),
        take_profit=-3.0,
        stop_loss=3.0,
    )
    return {
        Regime.ADVANCE: advance,
        Regime.ACCUMULATION: accumulation,
        Regime.DECLINE: decline,
        Regime.DISTRIBUTION: distribution,
    }


# ---------------------------------------------------------------- indicators


class IndicatorSet(dict):
    """Precomputed indicator arrays keyed by name, aligned to one price series."""

    def __init__(self, dates, close, items=()):
        super().__init__(items)
        self.dates = dates
        self["close"] = close

    def require(self, key: str) -> np.ndarray:
        try:
            return self[key]
        except KeyError:
            raise MissingIndicator(f"indicator {key!r} was not precomputed") from None


def _bb_key(side, window, k):
    return f"bollinger_{side}({window},{k:g})"


def _requirements(spec: StrategySpec):
    keys = {f"ema({spec.ema_span})", f"atr({spec.atr_window})"}
    for rule in spec.entries + spec.exits:
        keys.add(_rule_key(spec, rule))
    return keys


def _rule_key(spec: StrategySpec, rule: Rule) -> str:
    if rule.subject is B_UP:
        return _bb_key("upper", spec.bb_window, rule.param)
    if rule.subject is B_LO:
        return _bb_key("lower", spec.bb_window, rule.param)
    if rule.subject is RSI:
        return f"rsi({spec.rsi_period})"
    if rule.subject is EMA:
        return f"ema({spec.ema_span})"
    return f"fib({spec.fib_lookback},{rule.param:g})"


def required_indicators(specs) -> list[str]:
    """Sorted indicator keys the given specs read (besides ``close``)."""
    return sorted(set().union(*(_requirements(s) for s in specs)))


def compute_indicators(p: PriceSeries, specs) -> IndicatorSet:
    """Every indicator the given specs reference."""
    ind = IndicatorSet(p.dates, p.close)
    swings = {}
    for spec in specs:
        for key in sorted(_requirements(spec)):
            if key in ind:
                continue
            name, args = key.split("(")
            args = args.rstrip(")").split(",")
            if name == "ema":
                ind[key] = ema(p, int(args[0])).values
            elif name == "atr":
                ind[key] = atr(p, int(args[0])).values
            elif name == "rsi":
                ind[key] = rsi(p, int(args[0])).values
            elif name.startswith("bollinger"):
                band = bollinger(p, int(args[0]), float(args[1]))
                ind[key] = (band.upper if name.endswith("upper") else band.lower).values
            elif name == "fib":
                look = int(args[0])
                if look not in swings:
                    swings[look] = swing_extremes(p, look)
                hi, lo = swings[look]
                ind[key] = fib_series(hi, lo, float(args[1])).values
    return ind


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class SignalLogEntry:
    date: np.datetime64
    rule: str
    action: str  # "enter" or "exit"


@dataclass(frozen=True)
class SwitchRecord:
    date: np.datetime64  # first date carrying the new label
    from_regime: Regime
    to_regime: Regime
    confirm_date: np.datetime64


@dataclass
class StrategyOutput:
    dates: np.ndarray
    positions: np.ndarray  # int8 in {-1, 0, +1}
    log: list = field(default_factory=list)
    switches: list = field(default_factory=list)


class _Runner:
    """Position state machine for one strategy over precomputed rule flags."""

    def __init__(self, spec: StrategySpec, ind: IndicatorSet):
        self.spec = spec
        self.sign = int(spec.direction)
        close = ind.require("close")
        self.entries = [(r.name, self._flags(r, ind, close)) for r in spec.entries]
        self.exits = [(r.name, self._flags(r, ind, close)) for r in spec.exits]
        base = ind.require(f"ema({spec.ema_span})")
        width = ind.require(f"atr({spec.atr_window})")
        tp_above, tp_below = crossing_flags(close, base + spec.take_profit * width)
        sl_above, sl_below = crossing_flags(close, base + spec.stop_loss * width)
        if self.sign > 0:
            self.exits += [("take_profit", tp_above), ("stop_loss", sl_below)]
        else:
            self.exits += [("take_profit", tp_below), ("stop_loss", sl_above)]
        self.position = 0

    def _flags(self, rule: Rule, ind: IndicatorSet, close: np.ndarray) -> np.ndarray:
        ref = ind.require(_rule_key(self.spec, rule))
        if rule.subject is RSI:
            up, down = crossing_flags(ref, np.full(len(ref), rule.param))
        else:
            up, down = crossing_flags(close, ref)
        return up if rule.cross is CrossKind.ABOVE else down

    def step(self, t: int, allow_entry: bool = True) -> Optional[str]:
        """Advance to bar ``t``; returns the rule behind a transition, if any."""
        if self.position:
            for name, flags in self.exits:
                if flags[t]:
                    self.position = 0
                    return name
            return None
        if allow_entry:
            for name, flags in self.entries:
                if flags[t]:
                    self.position = self.sign
                    return name
        return None


def evaluate(spec: StrategySpec, p: PriceSeries, indicators: Optional[IndicatorSet] = None,
             active: Optional[np.ndarray] = None) -> StrategyOutput:
    """Target positions for one strategy.

    ``active`` optionally restricts trading to masked bars: an open position is
    closed on the first inactive bar (logged as ``regime_exit``) and no entry is
    taken while inactive.
    """
    ind = indicators if indicators is not None else compute_indicators(p, [spec])
    runner = _Runner(spec, ind)
    n = len(p)
    positions = np.zeros(n, dtype=np.int8)
    log = []
    for t in range(n):
        if active is not None and not active[t]:
            if runner.position:
                runner.position = 0
                log.append(SignalLogEntry(p.dates[t], "regime_exit", "exit"))
            continue
        was = runner.position
        fired = runner.step(t)
        if fired is not None:
            log.append(SignalLogEntry(p.dates[t], fired, "enter" if not was else "exit"))
        positions[t] = runner.position
    return StrategyOutput(p.dates, positions, log)


@dataclass(frozen=True)
class AdaptiveConfig:
    bullish_confirm: float = 0.01
    bearish_confirm: float = 0.05
    specs: Mapping = None

    def __post_init__(self):
        if self.bullish_confirm <= 0 or self.bearish_confirm <= 0:
            raise InvalidStrategy("confirmation thresholds must be positive")
        if self.specs is None:
            object.__setattr__(self, "specs", builtin_specs())


def adaptive(labels: LabelSeries, cfg: AdaptiveConfig, p: PriceSeries,
             indicators: Optional[IndicatorSet] = None) -> StrategyOutput:
    """Run the strategy of the prevailing regime, switching only after price confirmation.

    After the label changes, the incumbent strategy keeps trading until the close
    has risen ``bullish_confirm`` (new regime bullish) or fallen
    ``bearish_confirm`` (new regime bearish) relative to the close on the
    change date.  On confirmation the incumbent's position is closed on that
    bar and the new strategy starts flat from the next bar.  A label that reverts
    before confirming cancels the pending switch.
    """
    ind = indicators if indicators is not None else compute_indicators(p, cfg.specs.values())
    runners = {}
    tags = labels.lookup(p.dates)
    n = len(p)
    positions = np.zeros(n, dtype=np.int8)
    log, switches = [], []
    incumbent = None
    runner = None
    pending = None  # (target regime, change index)

    for t in range(n):
        lab = tags[t]
        if incumbent is None:
            if lab is None:
                continue
            incumbent = lab
            runner = runners.setdefault(lab, _Runner(cfg.specs[lab], ind))
        elif lab is not None:
            if pending is None and lab != incumbent:
                pending = (lab, t)
            elif pending is not None and lab != pending[0]:
                pending = None if lab == incumbent else (lab, t)

        if pending is not None and t > pending[1]:
            target, t0 = pending
            move = p.close[t] / p.close[t0] - 1.0
            if (move >= cfg.bullish_confirm) if target.bullish else (move <= -cfg.bearish_confirm):
                if runner.position:
                    log.append(SignalLogEntry(p.dates[t], f"switch:{incumbent.value}->{target.value}", "exit"))
                switches.append(SwitchRecord(p.dates[t0], incumbent, target, p.dates[t]))
                incumbent = target
                runner = runners.setdefault(target, _Runner(cfg.specs[target], ind))
                runner.position = 0
                pending = None
                continue

        was = runner.position
        fired = runner.step(t)
        if fired is not None:
            log.append(SignalLogEntry(p.dates[t], fired, "enter" if not was else "exit"))
        positions[t] = runner.position
    return StrategyOutput(p.dates, positions, log, switches)


def write_signal_log(log: list, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "rule", "action"])
        for e in log:
            writer.writerow([str(e.date), e.rule, e.action])


def write_switch_log(switches: list, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "from", "to", "confirm_date"])
        for s in switches:
            writer.writerow([str(s.date), s.from_regime.value, s.to_regime.value, str(s.confirm_date)])
