"""Per-regime asset return tables and correlation matrices.

Regimes always come from the reference index; each asset is evaluated on the
reference's labelled dates where it has data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from regimekit.data import ReturnSeries
from regimekit.errors import InsufficientData
from regimekit.labels import LabelSeries, Regime

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegimePanel:
    returns: pd.DataFrame  # date index x asset columns, NaN where an asset lacks data
    labels: pd.Series  # date index -> Regime

    @classmethod
    def build(cls, assets: Mapping[str, ReturnSeries], labels: LabelSeries) -> "RegimePanel":
        index = pd.DatetimeIndex(labels.dates)
        frame = pd.DataFrame(
            {name: pd.Series(r.values, index=pd.DatetimeIndex(r.dates)) for name, r in assets.items()}
        )
        frame = frame.reindex(index)
        return cls(frame, pd.Series(labels.values, index=index))


def regime_means(panel: RegimePanel, min_days: int = 2) -> pd.DataFrame:
    """Asset x regime mean daily return; NaN marks a regime with fewer than ``min_days`` observations."""
    out = {}
    for regime in Regime:
        sub = panel.returns[(panel.labels == regime).to_numpy()]
        counts = sub.count()
        out[regime.value] = sub.mean().where(counts >= min_days)
    return pd.DataFrame(out, columns=[r.value for r in Regime])


def regime_counts(panel: RegimePanel) -> pd.DataFrame:
    return pd.DataFrame(
        {r.value: panel.returns[(panel.labels == r).to_numpy()].count() for r in Regime},
        columns=[r.value for r in Regime],
    )


def _pairwise_corr(frame: pd.DataFrame, min_periods: int) -> pd.DataFrame:
    corr = frame.corr(method="pearson", min_periods=min_periods)
    values = corr.to_numpy(copy=True)
    values = (values + values.T) / 2.0
    np.fill_diagonal(values, [1.0 if frame[c].count() >= min_periods else np.nan for c in frame.columns])
    return pd.DataFrame(np.clip(values, -1.0, 1.0), index=corr.index, columns=corr.columns)


def regime_correlations(panel: RegimePanel, min_days: int = 3) -> dict[Regime, pd.DataFrame]:
    """Pairwise-complete Pearson correlations within each regime.

    Regimes with fewer than ``min_days`` dates are left out; if none qualify
    :class:`InsufficientData` is raised.
    """
    out = {}
    for regime in Regime:
        sub = panel.returns[(panel.labels == regime).to_numpy()]
        if len(sub) < min_days:
            logger.info("regime %s has %d days; no correlation matrix", regime.value, len(sub))
            continue
        out[regime] = _pairwise_corr(sub, min_days)
    if not out:
        raise InsufficientData(f"no regime has {min_days} or more days")
    return out


def write_means_csv(table: pd.DataFrame, path) -> None:
    table.to_csv(Path(path), index_label="asset", float_format="%.17g", lineterminator="\n")


def write_correlation_csvs(mats: Mapping[Regime, pd.DataFrame], out_dir) -> list[Path]:
    paths = []
    for regime, mat in mats.items():
        path = Path(out_dir) / f"corr_{regime.value.lower()}.csv"
        mat.to_csv(path, index_label="asset", float_format="%.17g", lineterminator="\n")
        paths.append(path)
    return paths
