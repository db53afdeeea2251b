"""Scenario configuration, validation, JSON round-trip and built-in setups."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .delays import DelayModel
from .game import NetworkKind, NetworkSpec, ServiceArea
from .gossip import GainMode

ALGORITHMS = ("cobandit", "ewa", "exp3")
EVENT_KINDS = ("join", "leave", "move", "network_add", "network_remove")


class ConfigError(ValueError):
    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Params:
    eta: float = 10.0
    # None means 1/n with n the active devices in the sender's area
    p_t: Optional[float] = None
    p_l: float = 1.0 / 3.0
    d: int = 5
    x: int = 32
    minimal_reset: bool = False
    gain_mode: str = GainMode.RECONSTRUCT.value
    reset_threshold: float = 0.75
    reset_margin: float = 0.025
    # devices hear broadcasts every slot, even while transmitting
    always_listen: bool = False
    # False disables every broadcast, including forced ones
    sharing: bool = True


@dataclass(frozen=True)
class Device:
    id: int
    area: Optional[str]
    algorithm: str = "cobandit"


@dataclass(frozen=True)
class Event:
    kind: str
    slot: int
    device: Optional[int] = None
    area: Optional[str] = None
    network: Optional[int] = None
    areas: Optional[tuple] = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "slot": self.slot}
        for name in ("device", "area", "network"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        if self.areas is not None:
            out["areas"] = list(self.areas)
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    networks: tuple
    areas: tuple
    devices: tuple
    horizon: int = 1200
    slot_duration_s: float = 15.0
    params: Params = field(default_factory=Params)
    events: tuple = ()
    seed: int = 0
    delay_model: Mapping[str, Any] = field(default_factory=dict)
    name: str = ""

    # -- derived ---------------------------------------------------------

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    def delays(self) -> DelayModel:
        return DelayModel.from_dict(self.delay_model, self.slot_duration_s)

    def with_params(self, **changes) -> "ScenarioConfig":
        return replace(self, params=replace(self.params, **changes))

    def with_algorithm(self, algorithm: str) -> "ScenarioConfig":
        return replace(self, devices=tuple(replace(d, algorithm=algorithm) for d in self.devices))

    def initially_active(self) -> set:
        first: dict = {}
        for ev in self.events:
            if ev.device is not None and ev.kind in ("join", "leave", "move"):
                first.setdefault(ev.device, ev.kind)
        return {d.id for d in self.devices if first.get(d.id) != "join"}

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "networks": [
                {"id": n.id, "capacity_mbps": n.capacity_mbps, "kind": n.kind.value} for n in self.networks
            ],
            "areas": [{"id": a.id, "networks": sorted(a.networks)} for a in self.areas],
            "devices": [asdict(d) for d in self.devices],
            "horizon": self.horizon,
            "slot_duration_s": self.slot_duration_s,
            "params": asdict(self.params),
            "events": [e.to_dict() for e in self.events],
            "seed": self.seed,
            "delay_model": self.delays().to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        errors = []
        try:
            networks = tuple(
                NetworkSpec(int(n["id"]), float(n["capacity_mbps"]), NetworkKind(n.get("kind", "wifi")))
                for n in data["networks"]
            )
            areas = tuple(ServiceArea(str(a["id"]), frozenset(int(x) for x in a["networks"])) for a in data["areas"])
            devices = tuple(
                Device(int(d["id"]), None if d.get("area") is None else str(d["area"]), d.get("algorithm", "cobandit"))
                for d in data["devices"]
            )
            known = set(Params.__dataclass_fields__)
            raw_params = dict(data.get("params", {}))
            unknown = sorted(set(raw_params) - known)
            if unknown:
                errors.append(f"unknown params: {unknown}")
            params = Params(**{k: v for k, v in raw_params.items() if k in known})
            events = tuple(
                Event(
                    kind=e["kind"],
                    slot=int(e["slot"]),
                    device=None if e.get("device") is None else int(e["device"]),
                    area=None if e.get("area") is None else str(e["area"]),
                    network=None if e.get("network") is None else int(e["network"]),
                    areas=None if e.get("areas") is None else tuple(str(a) for a in e["areas"]),
                )
                for e in data.get("events", [])
            )
            cfg = cls(
                networks=networks,
                areas=areas,
                devices=devices,
                horizon=int(data.get("horizon", 1200)),
                slot_duration_s=float(data.get("slot_duration_s", 15.0)),
                params=params,
                events=events,
                seed=int(data.get("seed", 0)),
                delay_model=dict(data.get("delay_model", {})),
                name=str(data.get("name", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(errors + [f"malformed scenario: {exc}"]) from exc
        errors += validate(cfg)
        if errors:
            raise ConfigError(errors)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text())


def validate(cfg: ScenarioConfig) -> list:
    """All problems with a configuration, empty when it is runnable."""
    errors = []
    net_ids = [n.id for n in cfg.networks]
    if len(set(net_ids)) != len(net_ids):
        errors.append("network ids are not unique")
    area_ids = [a.id for a in cfg.areas]
    if len(set(area_ids)) != len(area_ids):
        errors.append("area ids are not unique")
    for a in cfg.areas:
        missing = sorted(a.networks - set(net_ids))
        if missing:
            errors.append(f"area {a.id!r} references unknown networks {missing}")
    dev_ids = [d.id for d in cfg.devices]
    if len(set(dev_ids)) != len(dev_ids):
        errors.append("device ids are not unique")
    active = cfg.initially_active()
    for d in cfg.devices:
        if d.algorithm not in ALGORITHMS:
            errors.append(f"device {d.id}: unknown algorithm {d.algorithm!r}")
        if d.area is not None and d.area not in area_ids:
            errors.append(f"device {d.id}: unknown area {d.area!r}")
        if d.id in active and d.area is None:
            errors.append(f"device {d.id}: active at start but has no area")
    if cfg.horizon < 1:
        errors.append("horizon must be >= 1")
    if not cfg.slot_duration_s > 0:
        errors.append("slot_duration_s must be > 0")
    p = cfg.params
    if not p.eta > 0:
        errors.append("eta must be > 0")
    if p.p_t is not None and not 0 <= p.p_t <= 1:
        errors.append("p_t must lie in [0, 1]")
    if not 0 <= p.p_l <= 1:
        errors.append("p_l must lie in [0, 1]")
    if p.d < 0 or p.x < 0:
        errors.append("d and x must be >= 0")
    if p.gain_mode not in [m.value for m in GainMode]:
        errors.append(f"unknown gain_mode {p.gain_mode!r}")
    if not 0 < p.reset_threshold <= 1:
        errors.append("reset_threshold must lie in (0, 1]")
    kinds_needed = {n.kind.value for n in cfg.networks}
    try:
        model = cfg.delays()
        for kind in kinds_needed:
            model.for_kind(kind).sample(0.5, cfg.slot_duration_s)
    except (KeyError, ValueError) as exc:
        errors.append(f"delay model: {exc}")
    last = 0
    present = set(active)
    for i, ev in enumerate(cfg.events):
        where = f"event {i} ({ev.kind}@{ev.slot})"
        if ev.kind not in EVENT_KINDS:
            errors.append(f"{where}: unknown kind")
            continue
        if ev.slot < last:
            errors.append(f"{where}: events not sorted by slot")
        last = ev.slot
        if not 1 <= ev.slot <= cfg.horizon:
            errors.append(f"{where}: slot outside 1..{cfg.horizon}")
        if ev.kind in ("join", "leave", "move"):
            if ev.device not in dev_ids:
                errors.append(f"{where}: unknown device {ev.device}")
                continue
            if ev.kind == "join":
                if ev.device in present:
                    errors.append(f"{where}: device {ev.device} already present")
                present.add(ev.device)
            elif ev.device not in present:
                errors.append(f"{where}: device {ev.device} is not present")
            elif ev.kind == "leave":
                present.discard(ev.device)
            area = ev.area
            if ev.kind == "join" and area is None:
                area = next(d.area for d in cfg.devices if d.id == ev.device)
            if ev.kind in ("join", "move") and area not in area_ids:
                errors.append(f"{where}: unknown area {area!r}")
        else:
            if ev.network not in net_ids:
                errors.append(f"{where}: unknown network {ev.network}")
            for a in ev.areas or ():
                if a not in area_ids:
                    errors.append(f"{where}: unknown area {a!r}")
    return errors


# -- built-in setups --------------------------------------------------------

BASELINE_RATES = (18.0, 8.0, 13.0, 16.0, 10.0)
UNIFORM_RATES = (13.0,) * 5
SKEWED_RATES = (6.0, 7.0, 22.0, 16.0, 14.0)
# Which baseline networks are cellular is not fixed by any measurement;
# the slower links are treated as cellular.
_CELLULAR_BELOW = 11.0


def single_area(
    rates: Sequence[float] = BASELINE_RATES,
    n_devices: int = 20,
    algorithm: str = "cobandit",
    horizon: int = 1200,
    seed: int = 0,
    name: str = "",
    **params,
) -> ScenarioConfig:
    networks = tuple(
        NetworkSpec(i + 1, float(r), NetworkKind.CELLULAR if r < _CELLULAR_BELOW else NetworkKind.WIFI)
        for i, r in enumerate(rates)
    )
    area = ServiceArea("A", frozenset(n.id for n in networks))
    devices = tuple(Device(i + 1, "A", algorithm) for i in range(n_devices))
    return ScenarioConfig(
        networks=networks,
        areas=(area,),
        devices=devices,
        horizon=horizon,
        params=Params(**params),
        seed=seed,
        name=name,
    )


def baseline(**kw) -> ScenarioConfig:
    return single_area(BASELINE_RATES, name=kw.pop("name", "baseline"), **kw)


def uniform(**kw) -> ScenarioConfig:
    return single_area(UNIFORM_RATES, name=kw.pop("name", "uniform"), **kw)


def skewed(**kw) -> ScenarioConfig:
    return single_area(SKEWED_RATES, name=kw.pop("name", "skewed"), **kw)


def cooperation(p_t: float = 0.05, **kw) -> ScenarioConfig:
    """Baseline rates, no forwarding delay, devices always listening."""
    kw.setdefault("d", 0)
    kw.setdefault("always_listen", True)
    return single_area(BASELINE_RATES, name=kw.pop("name", "cooperation"), p_t=p_t, **kw)


def leave_at_600(**kw) -> ScenarioConfig:
    cfg = single_area(BASELINE_RATES, name=kw.pop("name", "leave600"), **kw)
    events = tuple(Event("leave", 600, device=d) for d in range(11, 21))
    return replace(cfg, events=events)


def join_leave(**kw) -> ScenarioConfig:
    cfg = single_area(BASELINE_RATES, name=kw.pop("name", "join_leave"), **kw)
    events = tuple(Event("join", 401, device=d, area="A") for d in range(11, 21)) + tuple(
        Event("leave", 800, device=d) for d in range(11, 21)
    )
    return replace(cfg, events=events)


MOBILITY_RATES = (16.0, 14.0, 22.0, 7.0, 4.0)
# food court, study area, bus stop; network 5 is shared by the last two
MOBILITY_AREAS = {"A": (1, 2), "B": (2, 3, 5), "C": (3, 4, 5)}


def mobility(algorithm: str = "cobandit", horizon: int = 1200, seed: int = 0, **params) -> ScenarioConfig:
    networks = tuple(
        NetworkSpec(i + 1, r, NetworkKind.CELLULAR if r < _CELLULAR_BELOW else NetworkKind.WIFI)
        for i, r in enumerate(MOBILITY_RATES)
    )
    areas = tuple(ServiceArea(a, frozenset(nets)) for a, nets in MOBILITY_AREAS.items())
    devices = tuple(
        Device(i, "A" if i <= 10 else "B" if i <= 15 else "C", algorithm) for i in range(1, 21)
    )
    events = tuple(Event("move", 401, device=d, area="B") for d in range(1, 9)) + tuple(
        Event("move", 801, device=d, area="C") for d in range(1, 9)
    )
    return ScenarioConfig(
        networks=networks,
        areas=areas,
        devices=devices,
        horizon=horizon,
        params=Params(**params),
        events=events,
        seed=seed,
        name="mobility",
    )


BUILTIN = {
    "baseline": baseline,
    "uniform": uniform,
    "skewed": skewed,
    "cooperation": cooperation,
    "leave600": leave_at_600,
    "join_leave": join_leave,
    "mobility": mobility,
}


def resolve(name_or_path: str) -> ScenarioConfig:
    """A built-in scenario by name, or a JSON scenario file."""
    if name_or_path in BUILTIN:
        return BUILTIN[name_or_path]()
    return ScenarioConfig.load(name_or_path)
