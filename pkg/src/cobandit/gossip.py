"""Random broadcast/listen feedback sharing between devices.

Devices broadcast their own observation together with everything buffered
from the last ``d`` slots; listeners in the same service area merge what
they hear, dropping duplicates by ``(slot, sender)`` and anything stale.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, TextIO

import numpy as np

from .game import GainScale


class CommMode(str, enum.Enum):
    BROADCAST = "broadcast"
    LISTEN = "listen"
    IDLE = "idle"


@dataclass(frozen=True)
class CommDecision:
    mode: CommMode
    forced_broadcast: bool = False
    # set when devices listen even while broadcasting
    also_listens: bool = False

    @property
    def broadcasts(self) -> bool:
        return self.mode is CommMode.BROADCAST

    @property
    def hears(self) -> bool:
        return self.mode is CommMode.LISTEN or self.also_listens


@dataclass(frozen=True)
class FeedbackMessage:
    slot: int
    sender: int
    network: int
    bitrate_mbps: float
    client_count: int
    available_networks: tuple
    distribution: tuple

    @property
    def key(self) -> tuple:
        return (self.slot, self.sender)

    def probability_of(self, network: int) -> float:
        try:
            return self.distribution[self.available_networks.index(network)]
        except ValueError:
            return 0.0

    def is_valid(self) -> bool:
        if len(self.distribution) != len(self.available_networks):
            return False
        if self.network not in self.available_networks:
            return False
        if any(p < 0 for p in self.distribution):
            return False
        return abs(sum(self.distribution) - 1.0) <= 1e-9


@dataclass
class FeedbackBuffer:
    """Messages a device holds, keyed by (slot, sender)."""

    d: int
    messages: dict = field(default_factory=dict)
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.messages)

    def __contains__(self, key) -> bool:
        return key in self.messages

    def __iter__(self):
        return iter(self.messages.values())

    def keys(self) -> set:
        return set(self.messages)

    def for_slot(self, slot: int) -> list:
        return [m for m in self.messages.values() if m.slot == slot]

    def copy(self) -> "FeedbackBuffer":
        return FeedbackBuffer(self.d, dict(self.messages), self.rejected)

    def clear(self) -> None:
        self.messages.clear()


# uniforms consumed per device per slot by the comm decision
COMM_DRAWS = 2


def comm_modes_array(
    forced: np.ndarray,
    p_t: np.ndarray | float,
    p_l: float,
    u: np.ndarray,
    always_listen: bool = False,
    sharing: bool = True,
) -> tuple:
    """Batched comm decision from uniforms `u` (m, 2); returns (broadcasts, hears)."""
    if not sharing:
        none = np.zeros(len(forced), dtype=bool)
        return none, ~none if always_listen else u[:, 1] < p_l
    broadcasts = forced | (u[:, 0] < p_t)
    if always_listen:
        return broadcasts, np.ones(len(forced), dtype=bool)
    return broadcasts, ~broadcasts & (u[:, 1] < p_l)


def decide_comm(
    exploring_unheard: bool,
    p_t: float,
    p_l: float,
    rng: np.random.Generator,
    always_listen: bool = False,
) -> CommDecision:
    """Draw this slot's communication mode.

    A device exploring an unheard network always broadcasts. Otherwise it
    broadcasts with probability `p_t`, else listens with probability `p_l`.
    """
    if not (0.0 <= p_t <= 1.0 and 0.0 <= p_l <= 1.0):
        raise ValueError("p_t and p_l must lie in [0, 1]")
    b, h = comm_modes_array(np.array([exploring_unheard]), p_t, p_l, rng.random((1, COMM_DRAWS)), always_listen)
    if b[0]:
        return CommDecision(CommMode.BROADCAST, forced_broadcast=exploring_unheard, also_listens=bool(h[0]))
    return CommDecision(CommMode.LISTEN if h[0] else CommMode.IDLE)


def deliver(
    decisions: Mapping[int, CommDecision],
    buffers: Mapping[int, FeedbackBuffer],
    own_observations: Mapping[int, FeedbackMessage],
    area_of: Mapping[int, object],
) -> dict:
    """Messages each device hears this slot.

    Every listener gets the current observation and full buffer of every
    broadcaster in its area. Buffers are read as they were before this slot.
    """
    outgoing: dict = {}
    for dev in sorted(decisions):
        if decisions[dev].broadcasts:
            bag = outgoing.setdefault(area_of[dev], {})
            bag[dev] = [own_observations[dev], *buffers[dev]]
    received: dict = {}
    for dev in sorted(decisions):
        got: dict = {}
        if decisions[dev].hears:
            for sender, msgs in outgoing.get(area_of[dev], {}).items():
                if sender == dev:
                    continue
                for m in msgs:
                    got.setdefault(m.key, m)
        received[dev] = set(got.values())
    return received


def absorb(
    buffer: FeedbackBuffer,
    incoming: Iterable[FeedbackMessage],
    own_observation: Optional[FeedbackMessage],
    t: int,
    d: int,
) -> FeedbackBuffer:
    """Merge new messages, keeping one copy per (slot, sender) within d slots."""
    out = FeedbackBuffer(d, {k: m for k, m in buffer.messages.items() if m.slot >= t - d}, buffer.rejected)
    batch = ([own_observation] if own_observation is not None else []) + sorted(
        incoming, key=lambda m: m.key
    )
    for m in batch:
        if m.slot < t - d or m.slot > t:
            continue
        if m.key in out.messages:
            continue
        if not m.is_valid():
            out.rejected += 1
            continue
        out.messages[m.key] = m
    return out


@dataclass(frozen=True)
class UnheardTracker:
    """Slot at which each network was last heard of."""

    last_heard: Mapping[int, int]
    x: int = 32
    t: int = 0

    @classmethod
    def start(cls, networks: Sequence[int], t: int, x: int = 32) -> "UnheardTracker":
        return cls({n: t for n in networks}, x, t)

    @property
    def unheard(self) -> frozenset:
        return frozenset(n for n, s in self.last_heard.items() if self.t - s >= self.x)

    def with_networks(self, networks: Sequence[int]) -> "UnheardTracker":
        last = {n: self.last_heard.get(n, self.t) for n in networks}
        return UnheardTracker(last, self.x, self.t)


def update_unheard(
    tracker: UnheardTracker,
    buffer: FeedbackBuffer,
    own_choice: Optional[int],
    t: int,
) -> UnheardTracker:
    """Mark networks heard at slot `t`: the device's own and any in the buffer."""
    last = dict(tracker.last_heard)
    heard = {m.network for m in buffer if t - buffer.d <= m.slot <= t}
    if own_choice is not None:
        heard.add(own_choice)
    for n in heard:
        if n in last:
            last[n] = t
    return UnheardTracker(last, tracker.x, t)


class GainMode(str, enum.Enum):
    RECONSTRUCT = "reconstruct"
    LITERAL = "literal"


def unscaled_gain_estimate(
    reports: Sequence[FeedbackMessage],
    mode: GainMode | str = GainMode.RECONSTRUCT,
) -> Optional[float]:
    """Bit rate (Mbps) a device would get by joining the reported network.

    `reconstruct` recovers the capacity from ``bitrate * client_count`` and
    shares it among one more client. `literal` divides the sum of reported
    bit rates by the client count plus one, which underestimates when only
    some clients report. None when there are no reports.
    """
    if not reports:
        return None
    if len({m.network for m in reports}) != 1:
        raise ValueError("reports must all be about the same network")
    n_hat = max(m.client_count for m in reports)
    if GainMode(mode) is GainMode.LITERAL:
        return sum(m.bitrate_mbps for m in reports) / (n_hat + 1)
    cap = sum(m.bitrate_mbps * m.client_count for m in reports) / len(reports)
    return cap / (n_hat + 1)


def estimate_network_gain(
    reports: Sequence[FeedbackMessage],
    scale: GainScale,
    mode: GainMode | str = GainMode.RECONSTRUCT,
) -> Optional[float]:
    raw = unscaled_gain_estimate(reports, mode)
    return None if raw is None else raw / scale.c_max


TRACE_FIELDS = (
    "slot",
    "sender",
    "network",
    "bitrate_mbps",
    "client_count",
    "available_networks",
    "distribution",
)


def write_messages_csv(messages: Iterable[FeedbackMessage], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for m in sorted(messages, key=lambda m: m.key):
        w.writerow(
            [
                m.slot,
                m.sender,
                m.network,
                repr(float(m.bitrate_mbps)),
                m.client_count,
                ";".join(str(n) for n in m.available_networks),
                ";".join(repr(float(p)) for p in m.distribution),
            ]
        )


def read_messages_csv(fh: TextIO) -> list:
    out = []
    for row in csv.DictReader(fh):
        out.append(
            FeedbackMessage(
                slot=int(row["slot"]),
                sender=int(row["sender"]),
                network=int(row["network"]),
                bitrate_mbps=float(row["bitrate_mbps"]),
                client_count=int(row["client_count"]),
                available_networks=tuple(int(n) for n in row["available_networks"].split(";")),
                distribution=tuple(float(p) for p in row["distribution"].split(";")),
            )
        )
    return out
