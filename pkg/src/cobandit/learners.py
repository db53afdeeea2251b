"""Per-device learning rules: Co-Bandit, EWA and EXP3.

The array helpers at the top work on a trailing network axis and any number of
leading batch axes, so the simulation engine can update every device at once
with the same code the single-device API uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .game import perceived_loss_array

# Weights never drop below this; keeps every available network selectable
# and every q strictly positive.
WEIGHT_FLOOR = 1e-200
DEFAULT_ETA = 10.0
DEFAULT_RESET_THRESHOLD = 0.75
DEFAULT_RESET_MARGIN = 0.025


class EstimatorConsistencyError(RuntimeError):
    """A network was observed although nobody heard had a chance to pick it."""


# -- array core -------------------------------------------------------------


def probabilities_array(weights: np.ndarray) -> np.ndarray:
    total = weights.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("no available network")
    return weights / total


def max_normalized_update(weights: np.ndarray, lhat: np.ndarray, eta: float) -> np.ndarray:
    """Multiplicative update followed by division by the largest new weight.

    Zero weights mark unavailable networks and stay zero.
    """
    if np.any(lhat < 0):
        raise ValueError("loss estimates must be >= 0")
    # subtracting the row minimum is a common factor, cancelled by the
    # normalisation; it only guards against every entry underflowing
    shift = np.where(weights > 0, lhat, np.inf).min(axis=-1, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    raw = weights * np.exp(-eta * (lhat - shift))
    top = raw.max(axis=-1, keepdims=True)
    out = raw / np.where(top > 0, top, 1.0)
    return np.where(weights > 0, np.maximum(out, WEIGHT_FLOOR), 0.0)


def log_miss(distributions: np.ndarray, heard: np.ndarray) -> np.ndarray:
    """Log-probability that none of the heard senders picked each network.

    `distributions` has shape (..., senders, k) and `heard` (..., senders).
    """
    with np.errstate(divide="ignore"):
        logs = np.log1p(-np.clip(distributions, 0.0, 1.0))
    return np.where(heard[..., None], logs, 0.0).sum(axis=-2)


def q_from_log_miss(logm: np.ndarray) -> np.ndarray:
    return -np.expm1(logm)


def importance_weighted_loss(
    losses: np.ndarray,
    chosen: np.ndarray,
    q: np.ndarray,
    valid: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Delay-averaged importance-weighted loss.

    Arrays have shape (..., lags, k). `chosen` flags that someone heard picked
    the network at that lag and `q` is the probability that someone heard
    would. `valid` masks lags outside the device's window. Returns (..., k).
    """
    if valid is None:
        valid = np.ones(losses.shape[:-1], dtype=bool)
    active = chosen & valid[..., None]
    if np.any(active & (q <= 0)):
        raise EstimatorConsistencyError("network observed with zero selection probability")
    terms = np.where(active, losses / np.where(active, q, 1.0), 0.0)
    n_lags = valid.sum(axis=-1)
    if np.any(n_lags == 0):
        raise ValueError("estimator window is empty")
    return terms.sum(axis=-2) / n_lags[..., None]


# -- single-device state ----------------------------------------------------


@dataclass(frozen=True)
class WeightState:
    """Weights over the networks one device can see.

    `history` keeps the most recent distributions, newest last, bounded by
    `history_len` (d + 1).
    """

    networks: tuple
    weights: np.ndarray
    eta: float = DEFAULT_ETA
    history: tuple = ()
    history_len: int = 6

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.networks),):
            raise ValueError("one weight per network required")
        if len(set(self.networks)) != len(self.networks):
            raise ValueError("duplicate network ids")
        if np.any(w <= 0):
            raise ValueError("weights must be > 0")
        object.__setattr__(self, "networks", tuple(self.networks))
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, networks: Sequence[int], eta: float = DEFAULT_ETA, d: int = 5) -> "WeightState":
        return cls(tuple(networks), np.ones(len(networks)), eta=eta, history_len=d + 1)

    def as_dict(self) -> dict:
        return dict(zip(self.networks, self.weights.tolist()))

    def index(self, network: int) -> int:
        return self.networks.index(network)

    def record(self, distribution: np.ndarray) -> "WeightState":
        hist = (self.history + (np.asarray(distribution, dtype=float),))[-self.history_len:]
        return replace(self, history=hist)


def probabilities(state: WeightState) -> np.ndarray:
    if not state.networks:
        raise ValueError("device has no available network")
    return probabilities_array(state.weights)


# uniforms consumed per device per slot by selection: gate, pick, sample
SELECT_DRAWS = 3


def select_network_array(
    p: np.ndarray,
    unheard: np.ndarray,
    n_devices: np.ndarray,
    u: np.ndarray,
) -> tuple:
    """Batched selection over rows of `p` (m, k) with uniforms `u` (m, 3).

    Row r explores one of its unheard networks (uniformly) with probability
    ``|unheard_r| / n_devices_r``; otherwise it samples from ``p_r`` by
    inverse CDF. Returns ``(index, exploring)``.
    """
    p = np.asarray(p, dtype=float)
    unheard = np.asarray(unheard, dtype=bool)
    n_unheard = unheard.sum(axis=-1)
    gate = np.minimum(1.0, n_unheard / np.maximum(n_devices, 1))
    exploring = (n_unheard > 0) & (u[:, 0] < gate)
    # position of the chosen unheard network among the row's unheard ones
    pos = np.minimum((u[:, 1] * n_unheard).astype(int), np.maximum(n_unheard - 1, 0))
    rank = np.cumsum(unheard, axis=-1) - 1
    explore_idx = np.argmax(unheard & (rank == pos[:, None]), axis=-1)
    cdf = np.cumsum(p, axis=-1)
    sample_idx = (cdf <= (u[:, 2] * cdf[:, -1])[:, None]).sum(axis=-1)
    # float rounding can push past the last positive entry
    last_pos = p.shape[-1] - 1 - np.argmax((p > 0)[:, ::-1], axis=-1)
    sample_idx = np.minimum(sample_idx, last_pos)
    return np.where(exploring, explore_idx, sample_idx), exploring


def select_network(
    p: Sequence[float],
    networks: Sequence[int],
    unheard: Sequence[int],
    n: int,
    rng: np.random.Generator,
) -> tuple:
    """Pick a network, exploring a long-unheard one with probability |unheard|/n.

    Returns ``(network, exploring_unheard)``. Always consumes three uniforms
    so the stream position does not depend on the outcome.
    """
    networks = list(networks)
    mask = np.array([[net in set(unheard) for net in networks]])
    idx, exploring = select_network_array(
        np.asarray(p, dtype=float)[None, :], mask, np.array([n]), rng.random((1, SELECT_DRAWS))
    )
    return networks[int(idx[0])], bool(exploring[0])


@dataclass(frozen=True)
class Report:
    """One heard device's choice at a slot, with the distribution it used."""

    sender: int
    network: int
    distribution: Mapping[int, float]


@dataclass(frozen=True)
class LagEvidence:
    """What a device knows about one past slot.

    `gains` maps each network whose gain for that slot is known to its scaled
    gain from this device's point of view.
    """

    slot: int
    reports: tuple
    gains: Mapping[int, float]


@dataclass(frozen=True)
class EstimatorInputs:
    device: int
    networks: tuple
    lags: tuple  # LagEvidence, newest first, length d' + 1
    d: int = 5

    def __post_init__(self) -> None:
        if not self.lags:
            raise ValueError("estimator needs at least the current slot")
        if len(self.lags) > self.d + 1:
            raise ValueError("window longer than d + 1 slots")
        newest = self.lags[0].slot
        for lag in self.lags:
            if not newest - self.d <= lag.slot <= newest:
                raise ValueError(f"slot {lag.slot} outside window")
            if all(r.sender != self.device for r in lag.reports):
                raise ValueError(f"device {self.device} missing from its own window at slot {lag.slot}")

    def arrays(self) -> tuple:
        """(losses, chosen, q) with shape (lags, k) for the array core."""
        k = len(self.networks)
        col = {net: i for i, net in enumerate(self.networks)}
        L = len(self.lags)
        gains = np.full((L, k), np.nan)
        chosen = np.zeros((L, k), dtype=bool)
        q = np.zeros((L, k))
        for a, lag in enumerate(self.lags):
            for net, g in lag.gains.items():
                if net in col:
                    gains[a, col[net]] = g
            dists = np.zeros((len(lag.reports), k))
            for r, rep in enumerate(lag.reports):
                if rep.network in col:
                    chosen[a, col[rep.network]] = True
                for net, pr in rep.distribution.items():
                    if net in col:
                        dists[r, col[net]] = pr
            q[a] = q_from_log_miss(log_miss(dists, np.ones(len(lag.reports), dtype=bool)))
        return perceived_loss_array(gains), chosen, q


def loss_estimate(inputs: EstimatorInputs) -> dict:
    """Per-network loss estimate over the device's delayed-feedback window."""
    losses, chosen, q = inputs.arrays()
    lhat = importance_weighted_loss(losses, chosen, q)
    return dict(zip(inputs.networks, lhat.tolist()))


def weight_update(state: WeightState, lhat: Mapping[int, float] | Sequence[float]) -> WeightState:
    if isinstance(lhat, Mapping):
        vec = np.array([lhat.get(net, 0.0) for net in state.networks])
    else:
        vec = np.asarray(lhat, dtype=float)
    return replace(state, weights=max_normalized_update(state.weights, vec, state.eta))


def ewa_step(state: WeightState, full_losses: Mapping[int, float]) -> WeightState:
    """Full-information step: every available network's loss must be given."""
    missing = [net for net in state.networks if full_losses.get(net) is None]
    if missing:
        raise ValueError(f"EWA needs a loss for every network, missing {missing}")
    return weight_update(state, full_losses)


def on_network_discovered(state: WeightState, network: int) -> WeightState:
    if network in state.networks:
        raise ValueError(f"network {network} already known")
    return replace(
        state,
        networks=state.networks + (network,),
        weights=np.append(state.weights, 1.0),
        history=(),
    )


def on_network_lost(
    state: WeightState,
    network: int,
    threshold: float = DEFAULT_RESET_THRESHOLD,
) -> WeightState:
    """Drop a network; reset everything if the device relied on it."""
    if network not in state.networks:
        raise ValueError(f"unknown network {network}")
    i = state.index(network)
    p_lost = probabilities(state)[i]
    keep = [j for j in range(len(state.networks)) if j != i]
    nets = tuple(state.networks[j] for j in keep)
    if not nets:
        return _empty_state(state)
    if p_lost >= threshold:
        w = np.ones(len(nets))
    else:
        w = state.weights[keep]
        w = w / w.max()
    return replace(state, networks=nets, weights=w, history=())


def _empty_state(state: WeightState) -> WeightState:
    # bypass validation: an empty device simply idles
    obj = object.__new__(WeightState)
    for name, value in (
        ("networks", ()),
        ("weights", np.zeros(0)),
        ("eta", state.eta),
        ("history", ()),
        ("history_len", state.history_len),
    ):
        object.__setattr__(obj, name, value)
    return obj


@dataclass(frozen=True)
class ResetContext:
    """Evidence gathered in one slot for the minimal reset.

    `explored` is ``(network, gain)`` when the device explored an unheard
    network this slot. `held_gain` is the most recent known gain of the
    network the device holds with high probability. `reported_gains` are the
    gains of other networks learned from this slot's feedback, each paired
    with the held network's gain for the same slot.
    """

    explored: Optional[tuple] = None
    held_gain: Optional[float] = None
    reported_gains: Mapping[int, tuple] = field(default_factory=dict)
    own_clients: int = 1


def minimal_reset_check(
    state: WeightState,
    ctx: ResetContext,
    rng: np.random.Generator,
    threshold: float = DEFAULT_RESET_THRESHOLD,
    margin: float = DEFAULT_RESET_MARGIN,
) -> tuple:
    """Restore a promising network's weight to 1.

    Returns ``(state, reset)``; on a reset the caller drops buffered feedback.
    """
    p = probabilities(state)
    top = int(np.argmax(p))
    if p[top] < threshold:
        return state, False
    held = state.networks[top]
    w = state.weights.copy()
    reset = False
    if ctx.explored is not None and ctx.held_gain is not None:
        net, gain = ctx.explored
        if net != held and net in state.networks and gain > ctx.held_gain:
            w[state.index(net)] = 1.0
            reset = True
    better = [
        (g_other / g_held, net)
        for net, (g_other, g_held) in ctx.reported_gains.items()
        if net != held and net in state.networks and g_held > 0 and g_other > g_held * (1.0 + margin)
    ]
    if better:
        _, net = max(better)
        if rng.random() < 1.0 / max(ctx.own_clients, 1):
            w[state.index(net)] = 1.0
            reset = True
    if not reset:
        return state, False
    return replace(state, weights=w, history=()), True


# -- EXP3 ------------------------------------------------------------------


def exp3_gamma(t: int) -> float:
    return min(1.0, t ** (-1.0 / 3.0))


def exp3_distribution_array(weights: np.ndarray, t: np.ndarray | int) -> np.ndarray:
    """Mixture of normalised weights and uniform; zero weight = unavailable."""
    avail = weights > 0
    k = avail.sum(axis=-1, keepdims=True)
    gamma = np.minimum(1.0, np.asarray(t, dtype=float) ** (-1.0 / 3.0))
    if np.ndim(gamma):
        gamma = gamma[..., None]
    base = weights / weights.sum(axis=-1, keepdims=True)
    return np.where(avail, (1.0 - gamma) * base + gamma / k, 0.0)


@dataclass(frozen=True)
class Exp3State:
    networks: tuple
    weights: np.ndarray
    t: int = 1

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0):
            raise ValueError("EXP3 weights must be > 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "networks", tuple(self.networks))

    @classmethod
    def uniform(cls, networks: Sequence[int]) -> "Exp3State":
        return cls(tuple(networks), np.ones(len(networks)))

    def distribution(self) -> np.ndarray:
        return exp3_distribution_array(self.weights, self.t)


def exp3_update_array(
    weights: np.ndarray,
    t: np.ndarray,
    chosen: np.ndarray,
    gains: np.ndarray,
) -> np.ndarray:
    """Batched EXP3 step; rows with ``chosen < 0`` are left alone."""
    p = exp3_distribution_array(weights, t)
    k = (weights > 0).sum(axis=-1)
    gamma = np.minimum(1.0, np.asarray(t, dtype=float) ** (-1.0 / 3.0))
    rows = np.nonzero(chosen >= 0)[0]
    out = weights.copy()
    if rows.size:
        c = chosen[rows]
        pc = p[rows, c]
        if np.any(pc <= 0):
            raise EstimatorConsistencyError("EXP3 chose a network with zero probability")
        ghat = gains[rows] / pc
        out[rows, c] *= np.exp(gamma[rows] * ghat / k[rows])
        # rescale huge rows; the distribution is scale-free
        big = out.max(axis=-1) > 1e100
        out[big] /= out[big].max(axis=-1, keepdims=True)
    return out


def exp3_step(state: Exp3State, chosen: int, gain: float) -> tuple:
    """Importance-weighted update of the chosen network, then advance t."""
    if not 0.0 <= gain <= 1.0:
        raise ValueError("gain must lie in [0, 1]")
    c = state.networks.index(chosen)
    w = exp3_update_array(
        state.weights[None, :], np.array([state.t]), np.array([c]), np.array([gain])
    )[0]
    new = replace(state, weights=w, t=state.t + 1)
    return new, new.distribution()

