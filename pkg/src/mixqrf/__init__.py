"""Quantile regression forests for mixed-frequency and longitudinal data."""

from .dynamic import CaviarSAV, DynamicMidasQRF
from .fmqrf import FMQRF
from .forest import QuantileForestRegressor
from .midas import MidasComponentTransformer

__version__ = "0.1.0"

__all__ = [
    "CaviarSAV",
    "DynamicMidasQRF",
    "FMQRF",
    "MidasComponentTransformer",
    "QuantileForestRegressor",
]
