"""Downlink spectral-efficiency toolkit for RIS-aided MISO links with EMI and channel aging."""

from risemi.config import LargeScaleParams, SystemConfig, load_config
from risemi.correlation import CorrelationMatrix, build_correlation
from risemi.estimation import EstimationStats, estimation_stats
from risemi.analytics import SinrBreakdown, evaluate, spectral_efficiency

__all__ = [
    "SystemConfig",
    "LargeScaleParams",
    "load_config",
    "CorrelationMatrix",
    "build_correlation",
    "EstimationStats",
    "estimation_stats",
    "SinrBreakdown",
    "evaluate",
    "spectral_efficiency",
]

__version__ = "0.1.0"
