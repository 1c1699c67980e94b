"""Simulation and fitting of quantum-dot photon-correlation experiments."""

__version__ = "0.1.0"

from .cascade import CascadeParams, PairIrf  # noqa: E402
from .dataio import CoincidenceHistogram, TimestampStream  # noqa: E402
from .hbt import HbtParams  # noqa: E402

__all__ = [
    "__version__",
    "CascadeParams",
    "PairIrf",
    "HbtParams",
    "CoincidenceHistogram",
    "TimestampStream",
]
