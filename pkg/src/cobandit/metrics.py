"""Stability detection, distance series and cross-run aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, TextIO

import numpy as np

from .game import Allocation, distance_to_ne, hamming_moves

STABLE_PROB = 0.75
MIN_STABLE_SLOTS = 10
EPSILON_PCT = 7.5


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    stabilization_slot: Optional[int]
    at_nash: bool
    # network index each device settled on, -1 when it did not settle
    stable_networks: tuple
    # devices that must switch to turn the settled allocation into the NE
    moves_to_nash: Optional[int] = None


def device_settle_slots(probs: np.ndarray, threshold: float = STABLE_PROB) -> tuple:
    """Per device: (network held at the last slot, earliest slot it holds through T).

    `probs` is (T, n, k) with NaN rows for absent devices; absent devices at
    T get (-1, None). Slots are 1-based.
    """
    T = probs.shape[0]
    last = probs[-1]
    present = ~np.isnan(last).all(axis=-1)
    nets = np.where(present, np.nanargmax(np.where(present[:, None], last, 0.0), axis=-1), -1)
    settle: list = []
    for j, net in enumerate(nets):
        if net < 0:
            settle.append(None)
            continue
        ok = probs[:, j, net] >= threshold  # NaN compares False
        if not ok[-1]:
            settle.append(None)
            continue
        bad = np.nonzero(~ok)[0]
        settle.append(int(bad[-1]) + 2 if bad.size else 1)
    return nets, settle


def detect_stability(
    probs: np.ndarray,
    T: Optional[int] = None,
    ne: Optional[Sequence[int]] = None,
    threshold: float = STABLE_PROB,
    min_slots: int = MIN_STABLE_SLOTS,
) -> StabilityVerdict:
    """Whether every device present at T holds one network with p >= threshold
    from some slot s <= T - min_slots through T.

    `ne` is the equilibrium allocation for the population present at T; the
    run is at Nash when the settled allocation matches it.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 3 or probs.shape[0] == 0:
        raise ValueError("probability series must have shape (T, devices, networks)")
    if T is not None and T != probs.shape[0]:
        raise ValueError(f"series covers {probs.shape[0]} slots, expected {T}")
    T = probs.shape[0]
    nets, settle = device_settle_slots(probs, threshold)
    present = nets >= 0
    if not present.any():
        raise ValueError("no device present at the last slot")
    latest = T - min_slots
    ok = [s is not None and s <= latest for s, p in zip(settle, present) if p]
    stable = all(ok)
    slot = max(s for s, p in zip(settle, present) if p) if stable else None
    settled = tuple(int(n) if p and s is not None and s <= latest else -1 for n, s, p in zip(nets, settle, present))
    at_nash = False
    moves = None
    if stable and ne is not None:
        counts = np.bincount(nets[present], minlength=len(ne))
        alloc, target = Allocation(tuple(counts)), Allocation(tuple(ne))
        at_nash = alloc.counts == target.counts
        moves = hamming_moves(alloc, target)
    return StabilityVerdict(stable, slot, bool(at_nash), settled, moves)


def distance_series(
    counts: np.ndarray,
    ne_counts: np.ndarray,
    capacities: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Distance to equilibrium for each slot's allocation; `ne_counts` per slot."""
    counts = np.asarray(counts)
    ne_counts = np.asarray(ne_counts)
    if ne_counts.ndim == 1:
        ne_counts = np.broadcast_to(ne_counts, counts.shape)
    out = np.zeros(len(counts))
    for i, (c, e) in enumerate(zip(counts, ne_counts)):
        if c.sum() == 0:
            continue
        out[i] = distance_to_ne(Allocation(tuple(c)), Allocation(tuple(e)), capacities)
    return out


def within_epsilon(distance: np.ndarray, eps: float = EPSILON_PCT) -> np.ndarray:
    return np.asarray(distance) <= eps


@dataclass
class RunSummary:
    seed: int
    verdict: StabilityVerdict
    distance: np.ndarray
    download_bytes: np.ndarray
    switches: np.ndarray

    @classmethod
    def from_record(cls, record) -> "RunSummary":
        verdict = detect_stability(record.probs, ne=record.ne_counts[-1])
        return cls(
            seed=record.seed,
            verdict=verdict,
            distance=record.distance.copy(),
            download_bytes=record.download_bytes.copy(),
            switches=record.switch_counts(),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "verdict": asdict(self.verdict),
            "median_download_bytes": float(np.median(self.download_bytes)),
            "download_bytes": self.download_bytes.tolist(),
            "switches": self.switches.tolist(),
            "final_distance": float(self.distance[-1]),
        }


@dataclass(frozen=True)
class Report:
    runs: int
    pct_stable: float
    pct_stable_at_nash: float
    median_stabilization_slot: Optional[float]
    median_download_bytes: float
    mean_distance: np.ndarray
    p10_distance: np.ndarray
    p90_distance: np.ndarray
    stabilization_slots: tuple

    @property
    def median_download_gb(self) -> float:
        return self.median_download_bytes / 1e9

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "pct_stable": self.pct_stable,
            "pct_stable_at_nash": self.pct_stable_at_nash,
            "median_stabilization_slot": self.median_stabilization_slot,
            "median_download_gb": self.median_download_gb,
            "median_download_bytes": self.median_download_bytes,
            "stabilization_slots": list(self.stabilization_slots),
        }

    def write_json(self, fh: TextIO) -> None:
        json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    def write_distance_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "mean_distance", "p10_distance", "p90_distance"])
        for t, (m, lo, hi) in enumerate(zip(self.mean_distance, self.p10_distance, self.p90_distance), 1):
            w.writerow([t, repr(float(m)), repr(float(lo)), repr(float(hi))])


def median(values: Sequence[float]) -> float:
    if len(values) == 0:
        raise ValueError("median of an empty sequence")
    return float(np.median(np.asarray(values, dtype=float)))


def aggregate(summaries: Sequence[RunSummary]) -> Report:
    """Table columns over runs: % stable, % stable at NE, medians, mean distance."""
    if not summaries:
        raise ValueError("nothing to aggregate")
    stable = [s for s in summaries if s.verdict.stable]
    slots = tuple(s.verdict.stabilization_slot for s in stable)
    downloads = np.concatenate([s.download_bytes for s in summaries])
    dist = np.stack([s.distance for s in summaries])
    return Report(
        runs=len(summaries),
        pct_stable=100.0 * len(stable) / len(summaries),
        pct_stable_at_nash=100.0 * sum(s.verdict.at_nash for s in stable) / len(stable) if stable else 0.0,
        median_stabilization_slot=median(slots) if slots else None,
        median_download_bytes=median(downloads),
        mean_distance=dist.mean(axis=0),
        p10_distance=np.percentile(dist, 10, axis=0),
        p90_distance=np.percentile(dist, 90, axis=0),
        stabilization_slots=slots,
    )
