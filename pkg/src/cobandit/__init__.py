"""Cooperative bandit network selection: game, learners, gossip and simulator."""

from .engine import RunRecord, SlotRecord, run
from .game import Allocation, GainScale, NetworkKind, NetworkSpec, ServiceArea, nash_allocation
from .metrics import aggregate, detect_stability
from .scenario import Params, ScenarioConfig

__all__ = [
    "Allocation",
    "GainScale",
    "NetworkKind",
    "NetworkSpec",
    "Params",
    "RunRecord",
    "ScenarioConfig",
    "ServiceArea",
    "SlotRecord",
    "aggregate",
    "detect_stability",
    "nash_allocation",
    "run",
]
