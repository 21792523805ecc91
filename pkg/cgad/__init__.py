"""Causal-graph anomaly detection for multivariate time series."""

from .config import read_core_version

__version__ = read_core_version()
