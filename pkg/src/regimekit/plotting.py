"""Report figures rendered to SVG with matplotlib.

Figures are built on bare :class:`~matplotlib.figure.Figure` objects (no pyplot
state) and saved with a fixed hash salt and no timestamp, so identical inputs
give byte-identical files.  Each regime shading patch carries an SVG id of the
form ``regime-<label>-<start>-<end>`` for downstream tooling.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from regimekit.labels import Regime

REGIME_COLORS = {
    Regime.ADVANCE: "#2ca02c",
    Regime.ACCUMULATION: "#98df8a",
    Regime.DECLINE: "#d62728",
    Regime.DISTRIBUTION: "#ff9896",
}

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "regimekit",
    "svg.fonttype": "path",
}


def span_id(label: Regime, start, end) -> str:
    return f"regime-{label.value}-{start}-{end}"


def new_figure(width: float = 8.0, height: Optional[float] = None, nrows: int = 1, **kw):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(width, height or width * golden))
        axes = fig.subplots(nrows=nrows, **kw)
    return fig, axes


def save(fig: Figure, path) -> Path:
    path = Path(path)
    with mpl.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def shade_regimes(ax, segments: Sequence) -> None:
    """Background spans for regime segments; each span ends one day after its last date."""
    seen = set()
    for seg in segments:
        label = seg.label.value if seg.label not in seen else None
        seen.add(seg.label)
        ax.axvspan(
            seg.start,
            seg.end + np.timedelta64(1, "D"),
            color=REGIME_COLORS[seg.label],
            alpha=0.25,
            lw=0,
            label=label,
            gid=span_id(seg.label, seg.start, seg.end),
        )


def plot_equity(dates, equity, segments, prob_dates, p_high, title: str = "Equity") -> Figure:
    """Equity curve over regime shading, with the high-variance probability below."""
    with mpl.rc_context(STYLE):
        fig, (top, bottom) = new_figure(8.0, 5.5, nrows=2, sharex=True,
                                        gridspec_kw={"height_ratios": [3, 1]})
        shade_regimes(top, segments)
        top.plot(dates, equity, color="black", lw=0.9, label="equity")
        top.set_ylabel("account value")
        top.set_title(title)
        top.legend(loc="upper left", ncol=3, frameon=False)
        bottom.fill_between(prob_dates, 0.0, p_high, color="#1f77b4", alpha=0.6, lw=0)
        bottom.set_ylim(0.0, 1.0)
        bottom.set_ylabel("P(high var)")
        fig.tight_layout()
    return fig


def plot_regimes(dates, close, segments, title: str = "Market regimes") -> Figure:
    with mpl.rc_context(STYLE):
        fig, ax = new_figure(8.0, 4.0)
        shade_regimes(ax, segments)
        ax.plot(dates, close, color="black", lw=0.8)
        ax.set_ylabel("close")
        ax.set_title(title)
        ax.legend(loc="upper left", ncol=4, frameon=False)
        fig.tight_layout()
    return fig


def plot_segment_lengths(lengths: Sequence[int]) -> Figure:
    with mpl.rc_context(STYLE):
        fig, ax = new_figure(5.0, 3.5)
        ax.hist(lengths, bins=min(30, max(5, len(lengths))), color="#7f7f7f")
        ax.set_xlabel("regime length (days)")
        ax.set_ylabel("segments")
        fig.tight_layout()
    return fig


def plot_comparison(rows: Mapping[str, Mapping[str, float]], keys=("cagr_pct", "sharpe_pct", "max_drawdown_pct")) -> Figure:
    """Grouped bars of selected statistics, one group per strategy."""
    names = list(rows)
    with mpl.rc_context(STYLE):
        fig, axes = new_figure(8.0, 3.2, ncols=len(keys))
        for ax, key in zip(np.atleast_1d(axes), keys):
            values = [rows[n].get(key) or 0.0 for n in names]
            ax.bar(range(len(names)), values, color="#4c72b0")
            ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
            ax.set_title(key)
        fig.tight_layout()
    return fig


def plot_signal_paths(paths: Mapping, subject: str) -> Figure:
    """Mean forward paths for one subject, one line per (kind, regime)."""
    with mpl.rc_context(STYLE):
        fig, ax = new_figure(6.0, 3.8)
        for (subj, kind, regime), fp in sorted(paths.items(), key=lambda kv: (kv[0][1].value, kv[0][2].value)):
            if subj != subject:
                continue
            valid = fp.counts > 0
            offsets = np.arange(len(fp.mean_path))[valid]
            ax.plot(offsets, 100 * fp.mean_path[valid], color=REGIME_COLORS[regime],
                    ls="-" if kind.value == "CrossAbove" else "--",
                    label=f"{kind.value} / {regime.value} (n={fp.n_events})")
        ax.axhline(0.0, color="grey", lw=0.5)
        ax.set_xlabel("days after event")
        ax.set_ylabel("mean cumulative return (%)")
        ax.set_title(subject)
        ax.legend(frameon=False, fontsize=6)
        fig.tight_layout()
    return fig
