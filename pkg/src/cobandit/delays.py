"""Switching-delay distributions and per-slot download accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import special

BYTES_PER_MBIT = 1e6 / 8


@dataclass(frozen=True)
class DelayDistribution:
    """A delay law truncated to ``[0, upper]`` and sampled by inverse CDF.

    `dist` is ``johnsonsu`` (params a, b, loc, scale, as in scipy.stats),
    ``t`` (df, loc, scale) or ``constant`` (value).
    """

    dist: str
    params: Mapping[str, float] = field(default_factory=dict)

    def cdf(self, x: np.ndarray | float) -> np.ndarray:
        p = self.params
        x = np.asarray(x, dtype=float)
        if self.dist == "johnsonsu":
            return special.ndtr(p["a"] + p["b"] * np.arcsinh((x - p["loc"]) / p["scale"]))
        if self.dist == "t":
            return special.stdtr(p["df"], (x - p["loc"]) / p["scale"])
        if self.dist == "constant":
            return (x >= p["value"]).astype(float)
        raise ValueError(f"unknown delay distribution {self.dist!r}")

    def ppf(self, u: np.ndarray | float) -> np.ndarray:
        p = self.params
        u = np.asarray(u, dtype=float)
        if self.dist == "johnsonsu":
            return p["loc"] + p["scale"] * np.sinh((special.ndtri(u) - p["a"]) / p["b"])
        if self.dist == "t":
            return p["loc"] + p["scale"] * special.stdtrit(p["df"], u)
        if self.dist == "constant":
            return np.full_like(u, p["value"])
        raise ValueError(f"unknown delay distribution {self.dist!r}")

    def pdf(self, x: np.ndarray | float) -> np.ndarray:
        """Untruncated density; only used by checks."""
        from scipy import stats

        p = self.params
        if self.dist == "johnsonsu":
            return stats.johnsonsu.pdf(x, p["a"], p["b"], loc=p["loc"], scale=p["scale"])
        if self.dist == "t":
            return stats.t.pdf(x, p["df"], loc=p["loc"], scale=p["scale"])
        raise ValueError("constant delay has no density")

    def sample(self, u: np.ndarray | float, upper: float) -> np.ndarray:
        """Map uniforms to delays truncated to [0, upper]."""
        u = np.asarray(u, dtype=float)
        if self.dist == "constant":
            return np.clip(np.full_like(u, self.params["value"]), 0.0, upper)
        lo, hi = self.cdf(0.0), self.cdf(upper)
        if hi - lo <= 0:
            raise ValueError("delay distribution has no mass inside [0, slot_duration]")
        return np.clip(self.ppf(lo + u * (hi - lo)), 0.0, upper)

    def to_dict(self) -> dict:
        return {"dist": self.dist, **dict(self.params)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DelayDistribution":
        data = dict(data)
        return cls(data.pop("dist"), data)


# Placeholder fits in seconds, right-skewed for wifi and heavy-tailed for
# cellular; truncated means are about 5.4 s and 7.5 s. Override through the
# scenario's delay_model.
DEFAULT_WIFI = DelayDistribution("johnsonsu", {"a": -1.5, "b": 1.4, "loc": 3.5, "scale": 1.2})
DEFAULT_CELLULAR = DelayDistribution("t", {"df": 3.0, "loc": 7.5, "scale": 2.0})


@dataclass(frozen=True)
class DelayModel:
    by_kind: Mapping[str, DelayDistribution] = field(
        default_factory=lambda: {"wifi": DEFAULT_WIFI, "cellular": DEFAULT_CELLULAR}
    )
    slot_duration_s: float = 15.0

    def for_kind(self, kind: str) -> DelayDistribution:
        return self.by_kind[str(getattr(kind, "value", kind))]

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in sorted(self.by_kind.items())}

    @classmethod
    def from_dict(cls, data: Mapping, slot_duration_s: float = 15.0) -> "DelayModel":
        by_kind = {"wifi": DEFAULT_WIFI, "cellular": DEFAULT_CELLULAR}
        by_kind.update({k: DelayDistribution.from_dict(v) for k, v in data.items()})
        return cls(by_kind, slot_duration_s)


def sample_switch_delay(
    prev_network: int | None,
    next_network: int,
    next_kind: str,
    model: DelayModel,
    rng: np.random.Generator,
) -> float:
    """Seconds lost switching networks; zero when the device stays put."""
    if prev_network is None or prev_network == next_network:
        return 0.0
    return float(model.for_kind(next_kind).sample(rng.random(), model.slot_duration_s))


def accumulate_download(
    total_bytes: float,
    gain_scaled: float,
    c_max: float,
    delay_s: float,
    slot_duration_s: float,
) -> float:
    """Add one slot of download at the device's share of its network."""
    if not 0.0 <= delay_s <= slot_duration_s:
        raise ValueError("delay must lie within the slot")
    return total_bytes + gain_scaled * c_max * (slot_duration_s - delay_s) * BYTES_PER_MBIT
