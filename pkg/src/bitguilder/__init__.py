"""Deterministic ledger, proof-of-work consensus and network simulator for
an access-only informational money, plus exact meadow arithmetic, a
dual-money extension layer, a promise engine and an accounting layer."""

from .meadow import Rat
from .units import Dimension, Quantity

__version__ = "0.1.0"

__all__ = ["Rat", "Dimension", "Quantity", "__version__"]
