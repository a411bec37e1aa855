"""Flight holding prediction on airport networks."""

from ._airhold import *  # noqa: F401,F403
from ._airhold import AirholdError, FlightRecord, GbdtModel, Snapshot, WeightedDigraph

__all__ = [name for name in dir() if not name.startswith("_")]
