"""Slot-by-slot simulation of devices learning which network to join.

Every device's learning state lives in one row of a set of arrays, so each
phase of a slot updates all devices at once from the same pre-slot snapshot.
Gossip is tracked as knowledge matrices: ``know[s][j, j']`` says device ``j``
holds device ``j'``'s observation of slot ``s``. Broadcasting a buffer and
absorbing it is then a boolean matrix product.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .delays import BYTES_PER_MBIT
from .game import Allocation, distance_to_ne, nash_allocation_areas, perceived_loss_array
from .gossip import COMM_DRAWS, FeedbackMessage, GainMode, comm_modes_array
from .learners import (
    SELECT_DRAWS,
    EstimatorConsistencyError,
    ResetContext,
    WeightState,
    exp3_distribution_array,
    exp3_update_array,
    importance_weighted_loss,
    max_normalized_update,
    minimal_reset_check,
    probabilities_array,
    q_from_log_miss,
    select_network_array,
)
from .scenario import ConfigError, ScenarioConfig, validate

log = logging.getLogger(__name__)

ALGO_CODES = {"cobandit": 0, "ewa": 1, "exp3": 2}
COMM_IDLE, COMM_LISTEN, COMM_BROADCAST = 0, 1, 2

# column layout of the per-device uniform block drawn for every slot
_U_SELECT = slice(0, SELECT_DRAWS)
_U_COMM = slice(SELECT_DRAWS, SELECT_DRAWS + COMM_DRAWS)
_U_RESET = SELECT_DRAWS + COMM_DRAWS
_U_DELAY = _U_RESET + 1
DRAWS_PER_SLOT = _U_DELAY + 1

# log1p(-1) is -inf and 0 * -inf is nan inside a matrix product
_LOG_FLOOR = -1e300


def device_uniforms(seed: int, device_id: int, horizon: int) -> np.ndarray:
    """The (horizon, DRAWS_PER_SLOT) uniforms device `device_id` consumes.

    Each device has its own PCG64 stream keyed by (seed, device id); every
    slot uses a fixed block, so a device's draws never depend on others.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(device_id,))
    return np.random.Generator(np.random.PCG64(ss)).random((horizon, DRAWS_PER_SLOT))


@dataclass
class RunRecord:
    """Everything a run produced, indexed [slot - 1, device, network].

    Inactive entries hold -1 (ints) or NaN (floats).
    """

    config: ScenarioConfig
    device_ids: tuple
    network_ids: tuple
    active: np.ndarray
    choices: np.ndarray
    exploring: np.ndarray
    gains: np.ndarray
    comm: np.ndarray
    probs: np.ndarray
    switched: np.ndarray
    delay_s: np.ndarray
    counts: np.ndarray
    ne_counts: np.ndarray
    distance: np.ndarray
    download_bytes: np.ndarray
    resets: np.ndarray
    area: np.ndarray = field(default=None)

    @property
    def horizon(self) -> int:
        return self.choices.shape[0]

    @property
    def seed(self) -> int:
        return self.config.seed

    def slot(self, t: int) -> "SlotRecord":
        i = t - 1
        return SlotRecord(
            slot=t,
            choices=self.choices[i],
            exploring=self.exploring[i],
            gains=self.gains[i],
            comm=self.comm[i],
            max_prob=np.nanmax(np.where(self.active[i][:, None], self.probs[i], np.nan), axis=-1)
            if self.active[i].any()
            else np.full(len(self.device_ids), np.nan),
            switched=self.switched[i],
            delay_s=self.delay_s[i],
            counts=self.counts[i],
            distance=float(self.distance[i]),
        )

    def switch_counts(self) -> np.ndarray:
        return self.switched.sum(axis=0)

    def equals(self, other: "RunRecord") -> bool:
        names = ("active", "choices", "exploring", "gains", "comm", "probs", "switched",
                 "delay_s", "counts", "distance", "download_bytes", "resets")
        return all(np.array_equal(getattr(self, n), getattr(other, n), equal_nan=True) for n in names)


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    choices: np.ndarray
    exploring: np.ndarray
    gains: np.ndarray
    comm: np.ndarray
    max_prob: np.ndarray
    switched: np.ndarray
    delay_s: np.ndarray
    counts: np.ndarray
    distance: float


@dataclass(frozen=True)
class SlotView:
    """Read-only snapshot handed to a probe after each slot's updates."""

    t: int
    active: np.ndarray
    choices: np.ndarray
    probs: np.ndarray
    knowledge: dict  # slot -> (n, n) bool, for the window [t - d, t]
    evidence_start: np.ndarray
    loss_estimates: np.ndarray  # Co-Bandit rows, NaN elsewhere
    exact_losses: np.ndarray  # perceived loss over exact gains, every row
    weights: np.ndarray
    comm: np.ndarray


Probe = Callable[[SlotView], None]


class _Sim:
    def __init__(self, cfg: ScenarioConfig, probe: Optional[Probe]):
        errors = validate(cfg)
        if errors:
            raise ConfigError(errors)
        self.cfg = cfg
        self.probe = probe
        p = cfg.params
        self.p = p
        self.gain_mode = GainMode(p.gain_mode)
        devices = sorted(cfg.devices, key=lambda d: d.id)
        self.devices = devices
        self.dev_index = {d.id: j for j, d in enumerate(devices)}
        self.nets = list(cfg.networks)
        self.net_index = {n.id: i for i, n in enumerate(self.nets)}
        self.area_ids = [a.id for a in cfg.areas]
        self.area_index = {a: i for i, a in enumerate(self.area_ids)}
        n, K, A, T = len(devices), len(self.nets), len(cfg.areas), cfg.horizon
        self.n, self.K, self.A, self.T = n, K, A, T
        self.cap = np.array([net.capacity_mbps for net in self.nets])
        self.c_max = float(self.cap.max())
        self.kind = [net.kind.value for net in self.nets]
        self.area_mask = np.zeros((A, K), dtype=bool)
        for a in cfg.areas:
            for net in a.networks:
                self.area_mask[self.area_index[a.id], self.net_index[net]] = True
        self.algo = np.array([ALGO_CODES[d.algorithm] for d in devices])
        self.is_co = self.algo == 0
        self.is_ewa = self.algo == 1
        self.is_exp3 = self.algo == 2

        self.delay_model = cfg.delays()
        self.U = np.stack([device_uniforms(cfg.seed, d.id, T) for d in devices], axis=1)

        self.active = np.zeros(n, dtype=bool)
        self.area = np.full(n, -1)
        self.W = np.zeros((n, K))
        self.t3 = np.ones(n)
        self.last_heard = np.zeros((n, K), dtype=np.int64)
        self.evidence_start = np.ones(n, dtype=np.int64)
        self.prev_choice = np.full(n, -1)
        self.L = p.d + 1
        # know[s, j, j'] = 1 when device j holds device j''s slot-s observation
        self.know = np.zeros((T + 1, n, n))
        self.onehot = np.zeros((T + 1, n, K))
        self.ne_cache: dict = {}
        self.dist_cache: dict = {}
        self.kind_nets = {
            kind: [i for i, k in enumerate(self.kind) if k == kind] for kind in set(self.kind)
        }
        self.events = {}
        for ev in cfg.events:
            self.events.setdefault(ev.slot, []).append(ev)

        self.rec = dict(
            active=np.zeros((T, n), dtype=bool),
            choices=np.full((T, n), -1),
            exploring=np.zeros((T, n), dtype=bool),
            gains=np.full((T, n), np.nan),
            comm=np.full((T, n), -1, dtype=np.int8),
            probs=np.full((T, n, K), np.nan),
            switched=np.zeros((T, n), dtype=bool),
            delay_s=np.zeros((T, n)),
            counts=np.zeros((T, K), dtype=np.int64),
            ne_counts=np.zeros((T, K), dtype=np.int64),
            distance=np.zeros(T),
            resets=np.zeros((T, n), dtype=bool),
            area=np.full((T, n), -1),
        )
        self.download = np.zeros(n)
        # distributions each device used, read back over the estimator window
        self.P = np.zeros((T + 1, n, K))

        initially = cfg.initially_active()
        for d in devices:
            if d.id in initially:
                self._join(self.dev_index[d.id], self.area_index[d.area], 1)

    # -- state transitions ----------------------------------------------

    def _fresh_weights(self, j: int) -> None:
        avail = self.area_mask[self.area[j]]
        self.W[j] = avail.astype(float)
        self.t3[j] = 1

    def _forget(self, j: int, t: int) -> None:
        """Drop device j's buffered feedback for the window ending at t."""
        self.know[max(0, t - self.p.d): t + 1, j, :] = 0.0

    def _join(self, j: int, a: int, t: int) -> None:
        self.active[j] = True
        self.area[j] = a
        self._fresh_weights(j)
        self.last_heard[j] = t - 1
        self.evidence_start[j] = t
        self._forget(j, t)
        self.prev_choice[j] = -1

    def _leave(self, j: int, t: int) -> None:
        self.active[j] = False
        self.W[j] = 0.0
        self._forget(j, t)

    def _visible_change(self, j: int, new_mask: np.ndarray, t: int) -> None:
        """Apply discovered and lost networks to device j's weights."""
        old_mask = self.W[j] > 0
        lost = old_mask & ~new_mask
        found = new_mask & ~old_mask
        w = self.W[j].copy()
        if self.is_exp3[j]:
            top = w.max() if old_mask.any() else 1.0
            w[lost] = 0.0
            w[found] = top if w.any() else 1.0
            self.W[j] = w
        else:
            if lost.any() and old_mask.any():
                p = w / w.sum()
                if p[lost].max() >= self.p.reset_threshold:
                    w = new_mask.astype(float)
                else:
                    w[lost] = 0.0
                    if w.max() > 0:
                        w = w / w.max()
            w[found] = 1.0
            w[~new_mask] = 0.0
            self.W[j] = w
        self.last_heard[j, found] = t - 1

    def _apply_start_events(self, t: int) -> None:
        for ev in self.events.get(t, ()):
            if ev.kind == "join":
                j = self.dev_index[ev.device]
                area = ev.area if ev.area is not None else self.devices[j].area
                self._join(j, self.area_index[area], t)
            elif ev.kind == "move":
                j = self.dev_index[ev.device]
                self.area[j] = self.area_index[ev.area]
                self._visible_change(j, self.area_mask[self.area[j]], t)
            elif ev.kind in ("network_add", "network_remove"):
                i = self.net_index[ev.network]
                if ev.areas:
                    targets = [self.area_index[a] for a in ev.areas]
                elif ev.kind == "network_add":
                    targets = range(self.A)
                else:
                    targets = np.nonzero(self.area_mask[:, i])[0]
                for a in targets:
                    self.area_mask[a, i] = ev.kind == "network_add"
                for j in np.nonzero(self.active)[0]:
                    self._visible_change(j, self.area_mask[self.area[j]], t)

    def _apply_end_events(self, t: int) -> None:
        for ev in self.events.get(t, ()):
            if ev.kind == "leave":
                self._leave(self.dev_index[ev.device], t)

    def _ne(self, pops: tuple) -> np.ndarray:
        key = (pops, self.area_mask.tobytes())
        if key not in self.ne_cache:
            nets = [np.nonzero(self.area_mask[a])[0].tolist() for a in range(self.A)]
            self.ne_cache[key] = np.array(nash_allocation_areas(self.cap.tolist(), nets, list(pops)).counts)
        return self.ne_cache[key]

    def _distance(self, counts: np.ndarray, ne: np.ndarray) -> float:
        key = (counts.tobytes(), ne.tobytes())
        d = self.dist_cache.get(key)
        if d is None:
            d = distance_to_ne(Allocation(tuple(counts)), Allocation(tuple(ne)), self.cap.tolist())
            self.dist_cache[key] = d
        return d

    # -- one slot ---------------------------------------------------------

    def step(self, t: int) -> None:
        p, K, n, r = self.p, self.K, self.n, self.rec
        i = t - 1
        self._apply_start_events(t)
        u = self.U[i]
        avail = np.zeros((n, K), dtype=bool)
        on = self.active & (self.area >= 0)
        avail[on] = self.area_mask[self.area[on]]
        playing = on & avail.any(axis=1)
        self.W[~avail] = 0.0
        rows = np.nonzero(playing)[0]
        co_play = playing & self.is_co
        co_rows = np.nonzero(co_play)[0]

        # (2) distributions and selection against the slot-start state
        P = self.P[t]
        not_exp3 = rows[~self.is_exp3[rows]]
        ex_rows = rows[self.is_exp3[rows]]
        if not_exp3.size:
            P[not_exp3] = probabilities_array(self.W[not_exp3])
        if ex_rows.size:
            P[ex_rows] = exp3_distribution_array(self.W[ex_rows], self.t3[ex_rows])
        area_pop = np.bincount(self.area[playing], minlength=self.A)
        n_here = np.where(playing, area_pop[np.maximum(self.area, 0)], 0)
        unheard = avail & ((t - 1) - self.last_heard >= p.x) & self.is_co[:, None]
        choice = r["choices"][i]
        exploring = r["exploring"][i]
        if rows.size:
            idx, exp_flag = select_network_array(P[rows], unheard[rows], n_here[rows], u[rows, _U_SELECT])
            choice[rows] = idx
            exploring[rows] = exp_flag

        # (3) allocation and gains
        onehot = self.onehot[t]
        onehot[rows, choice[rows]] = 1.0
        counts = onehot.sum(axis=0).astype(np.int64)
        r["counts"][i] = counts
        own_gain = r["gains"][i]
        own_gain[rows] = self.cap[choice[rows]] / counts[choice[rows]] / self.c_max
        share = self.cap / np.maximum(counts, 1) / self.c_max
        hypo = self.cap / (counts + 1) / self.c_max
        exact = np.where(avail, np.where(onehot > 0, share, hypo), np.nan)
        exact_losses = perceived_loss_array(exact)

        # (4) communication among Co-Bandit devices
        comm = r["comm"][i]
        self.know[t] = 0.0
        self.know[t, co_rows, co_rows] = 1.0
        s0 = max(1, t - p.d)
        before = self.know[s0: t + 1].copy()
        if co_rows.size and p.sharing:
            p_t = 1.0 / np.maximum(n_here[co_rows], 1) if p.p_t is None else p.p_t
            b, h = comm_modes_array(
                exploring[co_rows], p_t, p.p_l, u[co_rows, _U_COMM],
                always_listen=p.always_listen, sharing=p.sharing,
            )
            comm[co_rows] = np.where(b, COMM_BROADCAST, np.where(h, COMM_LISTEN, COMM_IDLE))
            if b.any() and h.any():
                src = co_rows[b]
                dst = co_rows[h]
                link = (self.area[dst][:, None] == self.area[src][None, :]) & (dst[:, None] != src[None, :])
                if link.any():
                    # every listener merges the pre-slot buffers of the broadcasters it hears
                    got = np.matmul(link.astype(np.float64), before[:, src, :])
                    self.know[s0: t + 1, dst, :] = np.minimum(before[:, dst, :] + got, 1.0)
        elif co_rows.size:
            comm[co_rows] = np.where(
                comm_modes_array(exploring[co_rows], 0.0, p.p_l, u[co_rows, _U_COMM],
                                 always_listen=p.always_listen, sharing=False)[1],
                COMM_LISTEN, COMM_IDLE,
            )
        know = self.know[s0: t + 1]  # (lags, n, n), oldest first

        # (5) unheard tracking: own choice plus everything buffered
        heard_counts = np.matmul(know, self.onehot[s0: t + 1])  # (lags, n, K)
        heard_net = (heard_counts > 0).any(axis=0) | (onehot > 0)
        self.last_heard[heard_net & avail] = t

        # (6) learning updates
        lhat = None
        if co_rows.size:
            lhat = self._cobandit_estimate(t, s0, know, heard_counts, co_rows, avail)
            self.W[co_rows] = max_normalized_update(self.W[co_rows], lhat, p.eta)
        ewa_rows = rows[self.is_ewa[rows]]
        if ewa_rows.size:
            self.W[ewa_rows] = max_normalized_update(self.W[ewa_rows], exact_losses[ewa_rows], p.eta)
        if ex_rows.size:
            self.W[ex_rows] = exp3_update_array(self.W[ex_rows], self.t3[ex_rows], choice[ex_rows], own_gain[ex_rows])
            self.t3[ex_rows] += 1
        if p.minimal_reset and co_rows.size:
            self._minimal_reset(t, s0, know, before, co_rows, u)

        # (7) switching delay and download
        switched = r["switched"][i]
        switched[:] = playing & (self.prev_choice >= 0) & (choice != self.prev_choice)
        delay = r["delay_s"][i]
        dur = self.delay_model.slot_duration_s
        for kind in set(self.kind[c] for c in choice[switched]):
            sel = switched & np.isin(choice, self.kind_nets[kind])
            delay[sel] = self.delay_model.for_kind(kind).sample(u[sel, _U_DELAY], dur)
        self.download[rows] += own_gain[rows] * self.c_max * (dur - delay[rows]) * BYTES_PER_MBIT
        self.prev_choice[rows] = choice[rows]

        # distance to the equilibrium of the current population
        if rows.size:
            ne = self._ne(tuple(int(x) for x in area_pop))
            r["ne_counts"][i] = ne
            r["distance"][i] = self._distance(counts, ne)
        r["active"][i] = playing
        r["probs"][i][playing] = P[playing]
        r["area"][i] = np.where(self.active, self.area, -1)

        if self.probe is not None:
            full_lhat = np.full((n, K), np.nan)
            if lhat is not None:
                full_lhat[co_rows] = lhat
            self.probe(
                SlotView(
                    t=t,
                    active=playing.copy(),
                    choices=choice.copy(),
                    probs=P.copy(),
                    knowledge={s: self.know[s] > 0 for s in range(s0, t + 1)},
                    evidence_start=self.evidence_start.copy(),
                    loss_estimates=full_lhat,
                    exact_losses=np.where(playing[:, None], exact_losses, np.nan),
                    weights=self.W.copy(),
                    comm=comm.copy(),
                )
            )
        self._apply_end_events(t)

    def _cobandit_estimate(self, t, s0, know, heard_counts, rows, avail) -> np.ndarray:
        """Importance-weighted loss over each device's feedback window."""
        K = self.K
        P_win = self.P[s0: t + 1]  # (lags, n, K)
        with np.errstate(divide="ignore"):
            logs = np.maximum(np.log1p(-P_win), _LOG_FLOOR)
        q = q_from_log_miss(np.matmul(know[:, rows, :], logs))  # (lags, m, K)
        hc = heard_counts[:, rows, :]
        av = avail[rows][None, :, :]
        chosen = (hc > 0) & av
        n_i = self.rec["counts"][s0 - 1: t][:, None, :].astype(float)  # (lags, 1, K)
        cap = self.cap
        if self.gain_mode is GainMode.RECONSTRUCT:
            other = cap / (n_i + 1)
        else:
            other = hc * (cap / np.maximum(n_i, 1)) / (n_i + 1)
        own_hot = self.onehot[s0: t + 1, rows, :] > 0
        gains = np.where(own_hot, cap / np.maximum(n_i, 1), other) / self.c_max
        gains = np.where(chosen, gains, np.nan)
        losses = perceived_loss_array(gains)
        valid = np.arange(s0, t + 1)[:, None] >= self.evidence_start[rows][None, :]  # (lags, m)
        # q never falls below the device's own probability
        if np.any(valid[..., None] & (q < P_win[:, rows, :] - 1e-12)):
            raise EstimatorConsistencyError("q fell below the device's own selection probability")
        # importance_weighted_loss wants (..., lags, k)
        return importance_weighted_loss(
            losses.transpose(1, 0, 2), chosen.transpose(1, 0, 2), q.transpose(1, 0, 2), valid.T
        )

    def _minimal_reset(self, t, s0, know, before, rows, u) -> None:
        r = self.rec
        i = t - 1
        choice, exploring, own_gain, counts = r["choices"][i], r["exploring"][i], r["gains"][i], r["counts"][i]
        W = self.W[rows]
        pmax = W.max(axis=1) / W.sum(axis=1)
        for j in rows[pmax >= self.p.reset_threshold]:
            w = self.W[j]
            avail_idx = np.nonzero(w > 0)[0]
            h = int(np.argmax(w))
            explored = (int(choice[j]), float(own_gain[j])) if exploring[j] else None
            held_gain = None
            if explored is not None:
                # the device's latest own gain on the held network, else its rejoin share
                for s in range(t, max(s0, self.evidence_start[j]) - 1, -1):
                    if r["choices"][s - 1, j] == h:
                        held_gain = float(r["gains"][s - 1, j])
                        break
                if held_gain is None:
                    held_gain = self.cap[h] / (counts[h] + 1) / self.c_max
            reported = self._sustained_advantage(j, h, t, s0, know, before)
            if explored is None and not reported:
                continue
            state = WeightState(tuple(int(x) for x in avail_idx), w[avail_idx], eta=self.p.eta, history_len=self.L)
            ctx = ResetContext(
                explored=explored,
                held_gain=held_gain,
                reported_gains=reported,
                own_clients=int(counts[choice[j]]),
            )
            new_state, did = minimal_reset_check(
                state, ctx, _FixedUniform(u[j, _U_RESET]), self.p.reset_threshold, self.p.reset_margin
            )
            if did:
                self.W[j, avail_idx] = new_state.weights
                self._forget(j, t)
                self.evidence_start[j] = t + 1
                r["resets"][i, j] = True

    def _sustained_advantage(self, j, h, t, s0, know, before) -> dict:
        """Networks whose known gain beat held network `h` in every slot of the window.

        Only evaluated when feedback arrived this slot. A network qualifies
        when both gains were known in at least half of the d + 1 window slots
        and it was ahead by the margin in each of them. Returns
        ``{network: (mean gain, mean held gain)}``.
        """
        margin = 1.0 + self.p.reset_margin
        fresh = (know[:, j, :] > 0) & ~(before[:, j, :] > 0)
        if not fresh.any():
            return {}
        pairs: dict = {}
        for a, s in enumerate(range(s0, t + 1)):
            if s < self.evidence_start[j]:
                continue
            cs = self.rec["choices"][s - 1]
            ns = self.rec["counts"][s - 1]
            nets_heard = set(int(c) for c in cs[know[a, j] > 0] if c >= 0)
            if h not in nets_heard:
                continue
            g_h = self.cap[h] / (ns[h] + (0 if cs[j] == h else 1)) / self.c_max
            for net in nets_heard:
                if net != h and self.W[j, net] > 0:
                    g = self.cap[net] / (ns[net] + (0 if cs[j] == net else 1)) / self.c_max
                    pairs.setdefault(net, []).append((g, g_h))
        out = {}
        for net, ps in pairs.items():
            if len(ps) >= (self.p.d + 2) // 2 and all(g > g_h * margin for g, g_h in ps):
                out[net] = (float(np.mean([x[0] for x in ps])), float(np.mean([x[1] for x in ps])))
        return out

    def run(self) -> RunRecord:
        for t in range(1, self.T + 1):
            self.step(t)
        r = self.rec
        return RunRecord(
            config=self.cfg,
            device_ids=tuple(d.id for d in self.devices),
            network_ids=tuple(net.id for net in self.nets),
            active=r["active"],
            choices=r["choices"],
            exploring=r["exploring"],
            gains=r["gains"],
            comm=r["comm"],
            probs=r["probs"],
            switched=r["switched"],
            delay_s=r["delay_s"],
            counts=r["counts"],
            ne_counts=r["ne_counts"],
            distance=r["distance"],
            download_bytes=self.download.copy(),
            resets=r["resets"],
            area=r["area"],
        )


class _FixedUniform:
    """Stands in for a Generator where a pre-drawn uniform is to be used."""

    def __init__(self, value: float):
        self.value = float(value)

    def random(self, *args):
        return self.value


def run(config: ScenarioConfig, probe: Optional[Probe] = None) -> RunRecord:
    """Simulate `config` for its full horizon; deterministic in (config, seed)."""
    return _Sim(config, probe).run()


def messages_from_record(record: RunRecord) -> list:
    """Every observation a Co-Bandit device produced, as feedback messages."""
    cfg = record.config
    algo = {d.id: d.algorithm for d in cfg.devices}
    c_max = max(n.capacity_mbps for n in cfg.networks)
    out = []
    for i in range(record.horizon):
        for j, dev in enumerate(record.device_ids):
            c = record.choices[i, j]
            if c < 0 or algo[dev] != "cobandit":
                continue
            p = record.probs[i, j]
            avail = np.nonzero(p > 0)[0]
            out.append(
                FeedbackMessage(
                    slot=i + 1,
                    sender=dev,
                    network=record.network_ids[c],
                    bitrate_mbps=float(record.gains[i, j] * c_max),
                    client_count=int(record.counts[i, c]),
                    available_networks=tuple(record.network_ids[a] for a in avail),
                    distribution=tuple(float(x) for x in p[avail]),
                )
            )
    return out
