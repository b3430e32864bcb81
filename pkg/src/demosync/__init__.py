"""Capture, synchronization and packaging of multi-sensor manipulation demos."""

from .errors import DemoSyncError
from .latency import LatencyConfig, LatencyEstimate, estimate_latency
from .episode import Episode, PipelineConfig, build_episode, read_episode, write_episode
from .sim import SimScenario, generate_session

__all__ = [
    "DemoSyncError",
    "Episode",
    "LatencyConfig",
    "LatencyEstimate",
    "PipelineConfig",
    "SimScenario",
    "build_episode",
    "estimate_latency",
    "generate_session",
    "read_episode",
    "write_episode",
]
__version__ = "0.1.0"
