"""Wireless network selection as a congestion game.

Networks share their capacity equally among associated devices. Gains are
scaled to [0, 1] by the largest capacity in the scenario.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np


class NetworkKind(str, Enum):
    WIFI = "wifi"
    CELLULAR = "cellular"


@dataclass(frozen=True)
class NetworkSpec:
    id: int
    capacity_mbps: float
    kind: NetworkKind = NetworkKind.WIFI

    def __post_init__(self) -> None:
        if not self.capacity_mbps > 0:
            raise ValueError(f"network {self.id}: capacity_mbps must be > 0")
        object.__setattr__(self, "kind", NetworkKind(self.kind))


@dataclass(frozen=True)
class ServiceArea:
    id: str
    networks: frozenset

    def __post_init__(self) -> None:
        object.__setattr__(self, "networks", frozenset(self.networks))
        if not self.networks:
            raise ValueError(f"service area {self.id!r} has no networks")


@dataclass(frozen=True)
class Allocation:
    """Number of devices associated with each network, in network order."""

    counts: tuple

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("allocation counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __len__(self) -> int:
        return len(self.counts)

    def __getitem__(self, i: int) -> int:
        return self.counts[i]


@dataclass(frozen=True)
class GainScale:
    c_max: float

    def __post_init__(self) -> None:
        if not self.c_max > 0:
            raise ValueError("c_max must be > 0")

    @classmethod
    def for_networks(cls, networks: Sequence[NetworkSpec]) -> "GainScale":
        return cls(max(n.capacity_mbps for n in networks))


class InconsistentAllocationError(ValueError):
    pass


def raw_gain(network: NetworkSpec, n_clients: int) -> float:
    """Per-device bit rate (Mbps) when `n_clients` share the network."""
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    return network.capacity_mbps / n_clients


def scaled_gain(
    network: NetworkSpec,
    allocation: Allocation,
    index: int,
    chosen: bool,
    scale: GainScale,
) -> float:
    """Gain of network `index` for one device, scaled to [0, 1].

    A device on the network sees the equal share among the current clients;
    a device elsewhere gets the share it would see after joining.
    """
    n = allocation.counts[index]
    if chosen:
        if n < 1:
            raise InconsistentAllocationError(
                f"device chose network {network.id} but allocation has no clients there"
            )
        return raw_gain(network, n) / scale.c_max
    return raw_gain(network, n + 1) / scale.c_max


def perceived_loss(gains_known: Sequence[Optional[float]]) -> list:
    """Best known gain minus each network's gain; 0 where the gain is unknown."""
    known = [g for g in gains_known if g is not None]
    if not known:
        return [0.0] * len(gains_known)
    best = max(known)
    return [0.0 if g is None else best - g for g in gains_known]


def perceived_loss_array(gains: np.ndarray) -> np.ndarray:
    """Vectorised perceived loss over the last axis; NaN marks an unknown gain."""
    known = ~np.isnan(gains)
    masked = np.where(known, gains, -np.inf)
    best = masked.max(axis=-1, keepdims=True)
    return np.where(known, best - np.where(known, gains, 0.0), 0.0)


def nash_allocation(capacities: Sequence[float], n: int) -> Allocation:
    """Pure Nash equilibrium counts for `n` identical devices.

    Devices are placed one at a time on the network offering the largest share
    after joining; ties go to the lowest index.
    """
    if len(capacities) == 0:
        raise ValueError("capacity list is empty")
    if any(not c > 0 for c in capacities):
        raise ValueError("capacities must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    counts = [0] * len(capacities)
    for _ in range(n):
        best = max(range(len(capacities)), key=lambda m: (capacities[m] / (counts[m] + 1), -m))
        counts[best] += 1
    return Allocation(tuple(counts))


def is_nash(capacities: Sequence[float], counts: Sequence[int]) -> bool:
    """Unilateral-deviation check for a single service area."""
    for i, ni in enumerate(counts):
        if ni < 1:
            continue
        for m, nm in enumerate(counts):
            if m != i and capacities[i] / ni < capacities[m] / (nm + 1):
                return False
    return True


def nash_allocation_areas(
    capacities: Sequence[float],
    area_networks: Sequence[Sequence[int]],
    area_population: Sequence[int],
) -> Allocation:
    """Equilibrium counts when devices in different areas see different networks.

    `area_networks[a]` lists the network indices visible in area `a` and
    `area_population[a]` how many devices are there. Starts from a greedy
    placement and runs best-response moves until no device strictly gains;
    this terminates because the game has an exact potential.
    """
    k = len(capacities)
    counts = [0] * k
    members: list = []
    for a, pop in enumerate(area_population):
        nets = list(area_networks[a])
        if pop and not nets:
            raise ValueError(f"area {a} has devices but no networks")
        for _ in range(pop):
            best = max(nets, key=lambda m: (capacities[m] / (counts[m] + 1), -m))
            counts[best] += 1
            members.append([a, best])
    changed = True
    while changed:
        changed = False
        for dev in members:
            a, cur = dev
            here = capacities[cur] / counts[cur]
            best, best_gain = cur, here
            for m in area_networks[a]:
                if m != cur:
                    g = capacities[m] / (counts[m] + 1)
                    if g > best_gain + 1e-12:
                        best, best_gain = m, g
            if best != cur:
                counts[cur] -= 1
                counts[best] += 1
                dev[1] = best
                changed = True
    return Allocation(tuple(counts))


def distance_to_ne(
    current: Allocation,
    ne: Allocation,
    capacities: Optional[Sequence[float]] = None,
) -> float:
    """Largest percentage gain a device would see at the equilibrium counts.

    For networks used at equilibrium this is the overcrowding ratio
    ``n_cur / n_ne - 1``. Devices sitting on a network that is empty at
    equilibrium are scored by their best move to an underloaded network,
    which needs `capacities`.
    """
    if len(current) != len(ne):
        raise ValueError("allocations cover different networks")
    if current.total != ne.total:
        raise ValueError(f"device totals differ: {current.total} vs {ne.total}")
    worst = 0.0
    for c, e in zip(current.counts, ne.counts):
        if e >= 1:
            worst = max(worst, c / e - 1.0)
    stranded = [i for i, (c, e) in enumerate(zip(current.counts, ne.counts)) if e == 0 and c > 0]
    if stranded:
        if capacities is None:
            raise ValueError("capacities required when devices sit on a network empty at equilibrium")
        under = [m for m, (c, e) in enumerate(zip(current.counts, ne.counts)) if c < e]
        for i in stranded:
            here = capacities[i] / current.counts[i]
            for m in under:
                worst = max(worst, (capacities[m] / (current.counts[m] + 1)) / here - 1.0)
    return 100.0 * worst


def hamming_moves(current: Allocation, ne: Allocation) -> int:
    """Minimum number of devices that must switch to turn `current` into `ne`."""
    return sum(abs(c - e) for c, e in zip(current.counts, ne.counts)) // 2


def capacities_of(networks: Sequence[NetworkSpec]) -> list:
    return [n.capacity_mbps for n in networks]


def index_networks(networks: Sequence[NetworkSpec]) -> Mapping[int, int]:
    return {n.id: i for i, n in enumerate(networks)}
