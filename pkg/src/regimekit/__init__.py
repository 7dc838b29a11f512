"""Markov-switching regime detection, regime-tailored technical strategies and backtests."""

from regimekit.errors import RegimeKitError

__version__ = "0.1.0"

__all__ = ["RegimeKitError", "__version__"]
