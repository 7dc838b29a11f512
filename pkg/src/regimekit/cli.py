"""Command-line front end.

Each stage reads the previous stage's files from ``--out-dir`` and writes its
own::

    regimekit fit       --input spx.csv --out-dir run/      # model.json, probs.csv
    regimekit label     --input spx.csv --out-dir run/      # regimes.csv, segments.csv
    regimekit backtest  --input spx.csv --out-dir run/ --strategy adaptive
    regimekit signals   --input spx.csv --out-dir run/      # signals.csv
    regimekit assets    --input spx.csv --asset gold=gld.csv --out-dir run/
    regimekit report    --input spx.csv --out-dir run/      # report/*.svg
    regimekit pipeline  --input spx.csv --out-dir run/      # all of the above

Set ``REGIMEKIT_LOG`` (DEBUG, INFO, WARNING ...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from regimekit import analytics, backtest, msar, plotting, regimes, signals, stats, strategies
from regimekit.data import parse_price_csv, to_returns
from regimekit.errors import ConfigError, RegimeKitError
from regimekit.labels import Regime

logger = logging.getLogger("regimekit")

SELECTORS = ("advance", "accumulation", "decline", "distribution", "adaptive")
COMMANDS = ("fit", "label", "backtest", "signals", "assets", "report", "pipeline")


@dataclass
class RunConfig:
    input: Optional[str] = None
    columns: dict = field(default_factory=dict)
    date_format: Optional[str] = None
    mode: str = "smoothed"
    return_kind: str = "log"
    threshold: float = 0.5
    lag: int = 0
    tma: int = 250
    atr: int = 20
    keltner_mult: float = 1.0
    capital: float = 1_000_000.0
    cost_bps: float = 1.0
    slippage_bps: float = 1.0
    commission_bps: float = 1.0
    strategy: str = "adaptive"
    scope: str = "regime"
    bullish_confirm: float = 0.01
    bearish_confirm: float = 0.05
    out_dir: str = "regimekit-out"
    seed: int = 0
    restarts: int = 4
    horizon: int = 30
    assets: dict = field(default_factory=dict)

    def validate(self, command: str) -> None:
        if not self.input:
            raise ConfigError("--input is required")
        if self.mode not in ("smoothed", "filtered"):
            raise ConfigError(f"--mode must be smoothed or filtered, got {self.mode!r}")
        if self.return_kind not in ("log", "simple"):
            raise ConfigError(f"--return-kind must be log or simple, got {self.return_kind!r}")
        if self.strategy not in SELECTORS:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {', '.join(SELECTORS)}")
        if self.scope not in ("regime", "full"):
            raise ConfigError(f"--scope must be regime or full, got {self.scope!r}")
        if min(self.tma, self.atr, self.horizon) < 1 or self.tma < 2:
            raise ConfigError("windows must be at least 1 (TMA at least 2)")
        if self.keltner_mult <= 0:
            raise ConfigError("--keltner-mult must be positive")
        if self.capital <= 0:
            raise ConfigError("--capital must be positive")
        if min(self.cost_bps, self.slippage_bps, self.commission_bps) < 0:
            raise ConfigError("cost basis points must be non-negative")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("--threshold must lie in (0, 1)")
        if self.lag < 0 or self.restarts < 1:
            raise ConfigError("--lag must be >= 0 and --restarts >= 1")
        if self.bullish_confirm <= 0 or self.bearish_confirm <= 0:
            raise ConfigError("confirmation thresholds must be positive")
        if command == "assets" and not self.assets:
            raise ConfigError("assets needs at least one --asset NAME=PATH")

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @property
    def costs(self) -> backtest.CostModel:
        return backtest.CostModel(self.cost_bps, self.slippage_bps, self.commission_bps)


class StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {type(exc).__name__}: {exc}")
        self.stage = stage


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {path} (run the earlier stage first)")
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _clean(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def _prices(cfg: RunConfig):
    return parse_price_csv(cfg.input, cfg.columns, cfg.date_format)


def _probs_path(cfg: RunConfig) -> Path:
    return cfg.out / ("probs.csv" if cfg.mode == "smoothed" else "probs_filtered.csv")


# ---------------------------------------------------------------- stages


def cmd_fit(cfg: RunConfig) -> None:
    prices = _prices(cfg)
    y = to_returns(prices, cfg.return_kind)
    model = msar.fit_em(y, k=2, n_restarts=cfg.restarts, seed=cfg.seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    msar.save_model(model, cfg.out / "model.json")
    msar.write_probabilities(model, cfg.out / "probs.csv", "smoothed")
    msar.write_probabilities(model, cfg.out / "probs_filtered.csv", "filtered")
    durations = msar.expected_durations(model.trans)
    logger.info("fit: sigma2=%s durations=%s loglik=%.3f", model.spec.sigma2, durations, model.loglik)


def _load_labels(cfg: RunConfig):
    return regimes.read_regimes_csv(_require(cfg.out / "regimes.csv"))


def cmd_label(cfg: RunConfig) -> None:
    _require(cfg.out / "model.json")
    prob_dates, probs = msar.read_probabilities(_require(_probs_path(cfg)))
    prices = _prices(cfg)
    variance = regimes.variance_labels_from_probs(prob_dates, probs[:, -1], cfg.threshold)
    trend = regimes.trend_regime(prices, cfg.tma, cfg.atr, cfg.keltner_mult)
    labels = regimes.regime_labels(trend, variance, cfg.lag)
    segs, seg_stats = regimes.segments(labels)
    regimes.write_regimes_csv(labels, cfg.out / "regimes.csv")
    regimes.write_segments_csv(segs, cfg.out / "segments.csv")
    (cfg.out / "segment_stats.json").write_text(_json({k: _clean(v) for k, v in seg_stats.items()}), encoding="utf-8")

    y = to_returns(prices, cfg.return_kind)
    table = regimes.regime_return_stats(y, labels)
    with (cfg.out / "regime_stats.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["regime", "mean_daily_return", "daily_std", "days", "mean_segment_length"])
        for regime, row in table.items():
            writer.writerow([regime.value, repr(float(row.mean_return)), repr(float(row.std_return)),
                             row.days, repr(float(row.mean_segment_length))])


def _run_strategy(cfg: RunConfig, prices, labels, selector: str):
    specs = strategies.builtin_specs()
    ind = strategies.compute_indicators(prices, specs.values())
    if selector == "adaptive":
        acfg = strategies.AdaptiveConfig(cfg.bullish_confirm, cfg.bearish_confirm, specs)
        return strategies.adaptive(labels, acfg, prices, ind)
    regime = Regime(selector.capitalize())
    active = None
    if cfg.scope == "regime":
        active = np.array([lab == regime for lab in labels.lookup(prices.dates)], dtype=bool)
    return strategies.evaluate(specs[regime], prices, ind, active)


def _write_backtest(cfg: RunConfig, out: Path, prices, labels, selector: str) -> stats.PerfReport:
    result_positions = _run_strategy(cfg, prices, labels, selector)
    result = backtest.run(prices, result_positions, cfg.capital, cfg.costs)
    out.mkdir(parents=True, exist_ok=True)
    backtest.write_trades_csv(result, out / "trades.csv")
    backtest.write_equity_csv(result, out / "equity.csv")
    strategies.write_signal_log(result_positions.log, out / "signal_log.csv")
    if selector == "adaptive":
        strategies.write_switch_log(result_positions.switches, out / "switch_log.csv")
    rep = stats.report(result)
    (out / "stats.json").write_text(_json({k: _clean(v) for k, v in rep.to_json_dict().items()}), encoding="utf-8")
    return rep


def cmd_backtest(cfg: RunConfig) -> None:
    labels = _load_labels(cfg)
    prices = _prices(cfg)
    _write_backtest(cfg, cfg.out, prices, labels, cfg.strategy)


def cmd_signals(cfg: RunConfig) -> None:
    labels = _load_labels(cfg)
    prices = _prices(cfg)
    y = to_returns(prices, "simple")
    _, paths = signals.analyse_signals(prices, y, labels, cfg.horizon)
    signals.write_paths_csv(paths, cfg.out / "signals.csv")


def cmd_assets(cfg: RunConfig) -> None:
    labels = _load_labels(cfg)
    series = {}
    for name, path in cfg.assets.items():
        series[name] = to_returns(parse_price_csv(path, cfg.columns, cfg.date_format, name), cfg.return_kind)
    if cfg.input:
        ref = _prices(cfg)
        series = {ref.symbol: to_returns(ref, cfg.return_kind), **series}
    panel = analytics.RegimePanel.build(series, labels)
    analytics.write_means_csv(analytics.regime_means(panel), cfg.out / "asset_means.csv")
    analytics.write_correlation_csvs(analytics.regime_correlations(panel), cfg.out)


def _read_signal_paths(path: Path) -> dict:
    grouped = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["subject"], signals.CrossKind(row["kind"]), Regime(row["regime"]))
            grouped.setdefault(key, []).append((float(row["mean_cum_return"]), int(row["n_events"])))
    out = {}
    for key, rows in grouped.items():
        mean = np.array([r[0] for r in rows])
        counts = np.array([r[1] for r in rows])
        out[key] = signals.ForwardPath(len(rows) - 1, mean, counts, int(counts[0]))
    return out


def cmd_report(cfg: RunConfig) -> None:
    eq_path = _require(cfg.out / "equity.csv")
    labels_path = _require(cfg.out / "regimes.csv")
    segs = regimes.read_segments_csv(_require(cfg.out / "segments.csv"))
    prob_dates, probs = msar.read_probabilities(_require(_probs_path(cfg)))
    prices = _prices(cfg)
    dates, equity, _ = backtest.read_equity_csv(eq_path)
    labels = regimes.read_regimes_csv(labels_path)

    rep = cfg.out / "report"
    rep.mkdir(parents=True, exist_ok=True)
    plotting.save(plotting.plot_equity(dates, equity, segs, prob_dates, probs[:, -1],
                                       title=f"{cfg.strategy} equity"), rep / "equity.svg")
    sub = prices.restrict(labels.dates)
    plotting.save(plotting.plot_regimes(sub.dates, sub.close, segs), rep / "regimes.svg")
    plotting.save(plotting.plot_segment_lengths([s.length for s in segs]), rep / "segment_lengths.svg")

    comparison = cfg.out / "comparison.csv"
    if comparison.exists():
        rows = _read_comparison(comparison)
        plotting.save(plotting.plot_comparison(rows), rep / "comparison.svg")
    sig_path = cfg.out / "signals.csv"
    if sig_path.exists():
        paths = _read_signal_paths(sig_path)
        for subject in sorted({k[0] for k in paths}):
            name = subject.replace("~", "_vs_").replace(".", "")
            plotting.save(plotting.plot_signal_paths(paths, subject), rep / f"signals_{name}.svg")


def _write_comparison(rows: dict, path: Path) -> None:
    keys = list(next(iter(rows.values())))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy"] + keys)
        for name, row in rows.items():
            writer.writerow([name] + ["" if row[k] is None else repr(row[k]) for k in keys])


def _read_comparison(path: Path) -> dict:
    with path.open(newline="", encoding="utf-8") as fh:
        return {
            r.pop("strategy"): {k: (float(v) if v else None) for k, v in r.items()}
            for r in csv.DictReader(fh)
        }


def cmd_pipeline(cfg: RunConfig) -> None:
    _stage("fit", cmd_fit, cfg)
    _stage("label", cmd_label, cfg)
    prices = _prices(cfg)
    labels = _load_labels(cfg)
    rows = {}
    for selector in SELECTORS:
        out = cfg.out if selector == "adaptive" else cfg.out / "strategies" / selector
        rep = _stage("backtest", _write_backtest, cfg, out, prices, labels, selector)
        rows[selector] = {k: _clean(v) for k, v in rep.to_json_dict().items()}
    _write_comparison(rows, cfg.out / "comparison.csv")
    _stage("signals", cmd_signals, cfg)
    if cfg.assets:
        _stage("assets", cmd_assets, cfg)
    _stage("report", cmd_report, cfg)


COMMAND_FUNCS = {
    "fit": cmd_fit,
    "label": cmd_label,
    "backtest": cmd_backtest,
    "signals": cmd_signals,
    "assets": cmd_assets,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def _stage(name, func, *args):
    try:
        return func(*args)
    except StageError:
        raise
    except (RegimeKitError, FileNotFoundError, ValueError) as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _pairs(values, flag):
    out = {}
    for item in values or []:
        if "=" not in item:
            raise ConfigError(f"{flag} expects NAME=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regimekit", description="Regime-switching trading research pipeline.")
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("--input", help="reference price CSV (date, open, high, low, close)")
    parser.add_argument("--column", action="append", metavar="CANON=HEADER",
                        help="map a canonical column to a header in the CSV (repeatable)")
    parser.add_argument("--date-format", help="strptime format for the date column (default ISO-8601)")
    parser.add_argument("--mode", default="smoothed", help="smoothed|filtered regime probabilities")
    parser.add_argument("--return-kind", default="log", help="log|simple returns for fitting")
    parser.add_argument("--threshold", type=float, default=0.5, help="high-variance probability threshold")
    parser.add_argument("--lag", type=int, default=0, help="days to lag the variance label (1 = causal)")
    parser.add_argument("--tma", type=int, default=250)
    parser.add_argument("--atr", type=int, default=20)
    parser.add_argument("--keltner-mult", type=float, default=1.0)
    parser.add_argument("--capital", type=float, default=1_000_000.0)
    parser.add_argument("--cost-bps", type=float, default=1.0)
    parser.add_argument("--slippage-bps", type=float, default=1.0)
    parser.add_argument("--commission-bps", type=float, default=1.0)
    parser.add_argument("--strategy", default="adaptive", help="|".join(SELECTORS))
    parser.add_argument("--scope", default="regime",
                        help="regime: single strategies trade only inside their regime; full: everywhere")
    parser.add_argument("--bullish-confirm", type=float, default=0.01)
    parser.add_argument("--bearish-confirm", type=float, default=0.05)
    parser.add_argument("--asset", action="append", metavar="NAME=PATH", help="extra asset CSV (repeatable)")
    parser.add_argument("--horizon", type=int, default=30, help="forward-path horizon in days")
    parser.add_argument("--restarts", type=int, default=4, help="EM restarts")
    parser.add_argument("--out-dir", default="regimekit-out")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def _config(args) -> RunConfig:
    return RunConfig(
        input=args.input,
        columns=_pairs(args.column, "--column"),
        date_format=args.date_format,
        mode=args.mode,
        return_kind=args.return_kind,
        threshold=args.threshold,
        lag=args.lag,
        tma=args.tma,
        atr=args.atr,
        keltner_mult=args.keltner_mult,
        capital=args.capital,
        cost_bps=args.cost_bps,
        slippage_bps=args.slippage_bps,
        commission_bps=args.commission_bps,
        strategy=args.strategy,
        scope=args.scope,
        bullish_confirm=args.bullish_confirm,
        bearish_confirm=args.bearish_confirm,
        out_dir=args.out_dir,
        seed=args.seed,
        restarts=args.restarts,
        horizon=args.horizon,
        assets=_pairs(args.asset, "--asset"),
    )


def _setup_logging() -> None:
    level = os.environ.get("REGIMEKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command not in COMMAND_FUNCS:
        parser.print_usage(sys.stderr)
        print(f"regimekit: error: unknown command {args.command!r}", file=sys.stderr)
        return 1
    try:
        cfg = _config(args)
        cfg.validate(args.command)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"regimekit: error: ConfigError: {exc}", file=sys.stderr)
        return 1
    try:
        _stage(args.command, COMMAND_FUNCS[args.command], cfg)
    except StageError as exc:
        print(f"regimekit: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
