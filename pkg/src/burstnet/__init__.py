"""Bursts in follower-graph dynamics and their relation to retweet cascades."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("burstnet")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .burst import Burst, CoBurst, CoBurstType, detect_all, pair_cobursts
from .events import Event, EventKind, IngestError, SeriesKind, TemporalGraph, build_graph, ingest
from .model import FitError, ModelParams, fit, p_hat

__all__ = [
    "Burst", "CoBurst", "CoBurstType", "Event", "EventKind", "FitError", "IngestError", "ModelParams",
    "SeriesKind", "TemporalGraph", "build_graph", "detect_all", "fit", "ingest", "p_hat", "pair_cobursts",
    "__version__",
]
