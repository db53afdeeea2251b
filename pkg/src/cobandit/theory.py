"""Closed-form regret bound, delayed-hearing probability and replicator field."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

B0_MAX = 1.0 - math.exp(-1.0)


class TheoryPreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class TheoryInputs:
    k: int
    d: int
    T: int
    b0: float
    n: int = 20
    eta: Optional[float] = None

    def violations(self) -> list:
        out = []
        if self.k < 2:
            out.append(f"k >= 2 required, got k={self.k}")
        if self.d < 0:
            out.append(f"d >= 0 required, got d={self.d}")
        if not 0.0 <= self.b0 <= B0_MAX:
            out.append(f"0 <= b0 <= 1 - 1/e required, got b0={self.b0}")
        if self.k >= 2 and not self.T > (self.d + 1) * self.k * math.log(self.k):
            out.append(
                f"T > (d+1) k ln k required, got T={self.T} <= {(self.d + 1) * self.k * math.log(self.k):.6g}"
            )
        return out


def regret_bound(inputs: TheoryInputs) -> tuple:
    """(eta*, bound) for the expected weak regret over T slots."""
    bad = inputs.violations()
    if bad:
        raise TheoryPreconditionError("; ".join(bad))
    k, d, T = inputs.k, inputs.d, inputs.T
    b = max(1.0 / k, inputs.b0)
    eta_star = math.sqrt(b * math.log(k) / (math.e**2 * (d + 1) * T))
    bound = 2.0 * math.e * math.sqrt((d + 1) * math.log(k) * T / b) + d
    return eta_star, bound


def paths_factor(n: int, t_prime: int) -> float:
    """(n-2)! / (n-2-t')! as a falling product, held at its t' = n-2 value beyond."""
    m = min(t_prime, n - 2)
    out = 1.0
    for i in range(m):
        out *= n - 2 - i
    return out


def hear_probability(n: int, b0: float, delay: int) -> float:
    """Probability that a device learns an observation within `delay` slots.

    A path of length t'+1 through t' relays is counted once per ordering of
    relays, each link heard with probability b0. Paths longer than n - 1
    links would revisit a device, so the probability stops changing once
    `delay` reaches n - 2.
    """
    if n < 2:
        raise ValueError("n >= 2 required")
    if not 0.0 <= b0 <= 1.0:
        raise ValueError("b0 must lie in [0, 1]")
    if delay < 0:
        raise ValueError("delay must be >= 0")
    miss = 1.0
    for tp in range(min(delay, n - 2) + 1):
        miss *= 1.0 - min(paths_factor(n, tp) * b0 ** (tp + 1), 1.0)
    return 1.0 - miss


def replicator_field(p: Sequence[float], losses: Sequence[float], q: Sequence[float]) -> np.ndarray:
    """xi_i = p_i * sum_{m != i} p_m (l_m - q_i l_i)."""
    p = np.asarray(p, dtype=float)
    losses = np.asarray(losses, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != losses.shape or p.shape != q.shape:
        raise ValueError("p, losses and q must have the same length")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability distribution")
    others_p = p.sum() - p
    others_pl = (p * losses).sum() - p * losses
    return p * (others_pl - q * losses * others_p)


def report(inputs: TheoryInputs, max_delay: Optional[int] = None) -> dict:
    """Bound, eta* and the hearing-probability table as a JSON-ready dict."""
    out: dict = {"inputs": inputs.__dict__.copy()}
    try:
        eta_star, bound = regret_bound(inputs)
        out.update(eta_star=eta_star, bound=bound)
    except TheoryPreconditionError as exc:
        out.update(eta_star=None, bound=None, error=str(exc))
    top = inputs.d if max_delay is None else max_delay
    out["hear_probability"] = {str(t): hear_probability(inputs.n, inputs.b0, t) for t in range(top + 1)}
    return out
