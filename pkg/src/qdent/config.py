"""TOML run configuration: schema validation and unit handling.

Energies and rates may be given in ``kT`` (units of k*T_ref) or ``ueV``; the
choice is explicit in ``[device.units]`` and never guessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .model import ANCILLA_LABELS, INFINITE, ContactSpec, DeviceParams, ueV_to_kT
from .sweep import PARAMETERS, Axis

UNITS = ("kT", "ueV")
INITIAL_ANCILLA = ANCILLA_LABELS + ("psi_plus", "psi_minus")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialState:
    """``kind`` is ``reference``, ``mixed`` or ``product`` (with dot/ancilla)."""

    kind: str = "reference"
    dot: str = "0"
    ancilla: str = "uu"


@dataclass(frozen=True)
class SteadyConfig:
    initial: InitialState = InitialState()


@dataclass(frozen=True)
class SweepConfig:
    axes: tuple[Axis, ...]
    workers: int = 1


@dataclass(frozen=True)
class EvolveConfig:
    t_final: float
    dt: float | None = None
    method: str = "exact"
    record_every: int = 1
    samples: int = 11
    initial: InitialState = InitialState()


@dataclass(frozen=True)
class PostselectConfig:
    outcome: str = "up"
    initial: InitialState = InitialState()


@dataclass(frozen=True)
class RunConfig:
    device: DeviceParams
    steady: SteadyConfig = SteadyConfig()
    sweep: SweepConfig | None = None
    evolve: EvolveConfig | None = None
    postselect: PostselectConfig = PostselectConfig()
    source: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# small validators

def _check_keys(table: dict, allowed: set[str], where: str):
    for key in table:
        if key not in allowed:
            path = f"{where}.{key}" if where else key
            raise ConfigError(f"{path}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _table(parent: dict, key: str, where: str, required: bool = False) -> dict | None:
    path = f"{where}.{key}" if where else key
    if key not in parent:
        if required:
            raise ConfigError(f"{path}: required table is missing")
        return None
    val = parent[key]
    if not isinstance(val, dict):
        raise ConfigError(f"{path}: must be a table")
    return val


def _number(table: dict, key: str, where: str, default: Any = ..., positive=False,
            nonnegative=False) -> float:
    path = f"{where}.{key}"
    if key not in table:
        if default is ...:
            raise ConfigError(f"{path}: required")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}: must be a number, got {val!r}")
    val = float(val)
    if not math.isfinite(val):
        raise ConfigError(f"{path}: must be finite")
    if positive and not val > 0:
        raise ConfigError(f"{path}: must be > 0, got {val:g}")
    if nonnegative and val < 0:
        raise ConfigError(f"{path}: must be >= 0, got {val:g}")
    return val


def _integer(table: dict, key: str, where: str, default: int, minimum: int) -> int:
    path = f"{where}.{key}"
    val = table.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}: must be an integer, got {val!r}")
    if val < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {val}")
    return val


def _choice(table: dict, key: str, where: str, choices, default: Any = ...) -> str:
    path = f"{where}.{key}"
    if key not in table:
        if default is ...:
            raise ConfigError(f"{path}: required (one of {', '.join(choices)})")
        return default
    val = table[key]
    if val not in choices:
        raise ConfigError(f"{path}: must be one of {', '.join(choices)}, got {val!r}")
    return val


# ---------------------------------------------------------------------------
# sections

def _parse_contact(raw: Any, k: int, energy_unit: str, rate_unit: str, t_ref: float) -> ContactSpec:
    where = f"device.contacts[{k}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: must be a table")
    _check_keys(raw, {"label", "mu", "temperature", "theta", "phi", "gamma", "polarization",
                      "gamma_up", "gamma_down"}, where)
    label = _choice(raw, "label", where, ("L", "R"))
    temperature = _number(raw, "temperature", where, positive=True)
    mu = _number(raw, "mu", where, 0.0)
    theta = _number(raw, "theta", where, 0.0)
    phi = _number(raw, "phi", where, 0.0)

    def rate(x):
        return ueV_to_kT(x, t_ref) if rate_unit == "ueV" else x

    if energy_unit == "ueV":
        mu = ueV_to_kT(mu, t_ref)
    by_total = "gamma" in raw or "polarization" in raw
    by_spin = "gamma_up" in raw or "gamma_down" in raw
    if by_total and by_spin:
        raise ConfigError(f"{where}: give either gamma + polarization or gamma_up + gamma_down, not both")
    if not (by_total or by_spin):
        raise ConfigError(f"{where}.gamma: required (or gamma_up + gamma_down)")
    try:
        if by_total:
            gamma = _number(raw, "gamma", where, positive=True)
            pol = _number(raw, "polarization", where)
            if not -1 <= pol <= 1:
                raise ConfigError(f"{where}.polarization: must lie in [-1, 1], got {pol:g}")
            return ContactSpec.from_polarization(label, rate(gamma), pol, mu=mu,
                                                 temperature=temperature, theta=theta, phi=phi)
        g_up = _number(raw, "gamma_up", where, nonnegative=True)
        g_dn = _number(raw, "gamma_down", where, nonnegative=True)
        return ContactSpec(label, mu, temperature, rate(g_up), rate(g_dn), theta, phi)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_device(raw: dict) -> DeviceParams:
    dev = _table(raw, "device", "", required=True)
    _check_keys(dev, {"epsilon", "j_exchange", "u_charging", "bandwidth_w", "t_ref",
                      "units", "contacts"}, "device")
    units = _table(dev, "units", "device", required=True)
    _check_keys(units, {"energy", "rate"}, "device.units")
    e_unit = _choice(units, "energy", "device.units", UNITS)
    r_unit = _choice(units, "rate", "device.units", UNITS)
    t_ref = _number(dev, "t_ref", "device", 10.0, positive=True)

    def energy(key, **kw):
        val = _number(dev, key, "device", **kw)
        return ueV_to_kT(val, t_ref) if e_unit == "ueV" else val

    epsilon = energy("epsilon")
    j_exchange = energy("j_exchange", positive=True)
    u = energy("u_charging", default=INFINITE, nonnegative=True) if "u_charging" in dev else INFINITE
    bandwidth = energy("bandwidth_w", default=1e4, positive=True) if "bandwidth_w" in dev else 1e4

    contacts = dev.get("contacts")
    if not isinstance(contacts, list) or len(contacts) != 2:
        raise ConfigError("device.contacts: exactly two [[device.contacts]] entries are required")
    specs = [_parse_contact(c, k, e_unit, r_unit, t_ref) for k, c in enumerate(contacts)]
    if {c.label for c in specs} != {"L", "R"}:
        raise ConfigError("device.contacts[].label: one contact must be L and the other R")
    try:
        return DeviceParams(epsilon, j_exchange, tuple(specs), u, bandwidth, t_ref)
    except ValueError as exc:
        raise ConfigError(f"device: {exc}") from exc


def _parse_initial(table: dict, where: str) -> InitialState:
    if "initial" not in table:
        return InitialState()
    val = table["initial"]
    path = f"{where}.initial"
    if isinstance(val, str):
        if val not in ("reference", "mixed"):
            raise ConfigError(f"{path}: must be 'reference', 'mixed' or a {{dot, ancilla}} table")
        return InitialState(val)
    if not isinstance(val, dict):
        raise ConfigError(f"{path}: must be a string or a table")
    _check_keys(val, {"dot", "ancilla"}, path)
    return InitialState("product", _choice(val, "dot", path, ("0", "u", "d", "2")),
                        _choice(val, "ancilla", path, INITIAL_ANCILLA))


def _parse_axes(raw: Any) -> tuple[Axis, ...]:
    if not isinstance(raw, list) or not 1 <= len(raw) <= 2:
        raise ConfigError("sweep.axes: must be a list of one or two axis tables")
    axes = []
    for k, ax in enumerate(raw):
        where = f"sweep.axes[{k}]"
        if not isinstance(ax, dict):
            raise ConfigError(f"{where}: must be a table")
        _check_keys(ax, {"parameter", "start", "stop", "points"}, where)
        param = _choice(ax, "parameter", where, PARAMETERS)
        start, stop = _number(ax, "start", where), _number(ax, "stop", where)
        if not start < stop:
            raise ConfigError(f"{where}.stop: must exceed start")
        default = 301 if len(raw) == 1 else 121
        axes.append(Axis(param, start, stop, _integer(ax, "points", where, default, 2)))
    if len({a.parameter for a in axes}) != len(axes):
        raise ConfigError("sweep.axes: parameters must be distinct")
    return tuple(axes)


def parse_config_dict(raw: dict) -> RunConfig:
    _check_keys(raw, {"device", "spectrum", "steady", "sweep", "evolve", "postselect"}, "")
    device = _parse_device(raw)
    if (spec := _table(raw, "spectrum", "")) is not None:
        _check_keys(spec, set(), "spectrum")

    steady = SteadyConfig()
    if (st := _table(raw, "steady", "")) is not None:
        _check_keys(st, {"initial"}, "steady")
        steady = SteadyConfig(_parse_initial(st, "steady"))

    sweep_cfg = None
    if (sw := _table(raw, "sweep", "")) is not None:
        _check_keys(sw, {"axes", "workers"}, "sweep")
        if "axes" not in sw:
            raise ConfigError("sweep.axes: required")
        sweep_cfg = SweepConfig(_parse_axes(sw["axes"]), _integer(sw, "workers", "sweep", 1, 1))

    evolve_cfg = None
    if (ev := _table(raw, "evolve", "")) is not None:
        _check_keys(ev, {"t_final", "dt", "method", "record_every", "samples", "initial"}, "evolve")
        evolve_cfg = EvolveConfig(
            t_final=_number(ev, "t_final", "evolve", nonnegative=True),
            dt=_number(ev, "dt", "evolve", None, positive=True) if "dt" in ev else None,
            method=_choice(ev, "method", "evolve", ("rk4", "exact"), "exact"),
            record_every=_integer(ev, "record_every", "evolve", 1, 1),
            samples=_integer(ev, "samples", "evolve", 11, 2),
            initial=_parse_initial(ev, "evolve"),
        )

    post = PostselectConfig()
    if (ps := _table(raw, "postselect", "")) is not None:
        _check_keys(ps, {"outcome", "initial"}, "postselect")
        post = PostselectConfig(_choice(ps, "outcome", "postselect", ("up", "down"), "up"),
                                _parse_initial(ps, "postselect"))
    return RunConfig(device, steady, sweep_cfg, evolve_cfg, post, source=raw)


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    return parse_config_dict(raw)


# ---------------------------------------------------------------------------
# serialization (always written in kT units)

def _initial_dict(init: InitialState):
    return init.kind if init.kind != "product" else {"dot": init.dot, "ancilla": init.ancilla}


def config_to_dict(cfg: RunConfig) -> dict:
    d = cfg.device
    dev: dict[str, Any] = {"epsilon": d.epsilon, "j_exchange": d.j_exchange,
                           "bandwidth_w": d.bandwidth_w, "t_ref": d.t_ref}
    if not d.infinite_u:
        dev["u_charging"] = d.u_charging
    dev["units"] = {"energy": "kT", "rate": "kT"}
    dev["contacts"] = [{"label": c.label, "mu": c.mu, "temperature": c.temperature,
                        "gamma_up": c.gamma_up, "gamma_down": c.gamma_down,
                        "theta": c.theta, "phi": c.phi} for c in d.contacts]
    out: dict[str, Any] = {"device": dev,
                           "steady": {"initial": _initial_dict(cfg.steady.initial)}}
    if cfg.sweep is not None:
        out["sweep"] = {"workers": cfg.sweep.workers,
                        "axes": [{"parameter": a.parameter, "start": a.start, "stop": a.stop,
                                  "points": a.points} for a in cfg.sweep.axes]}
    if cfg.evolve is not None:
        e = cfg.evolve
        ev: dict[str, Any] = {"t_final": e.t_final, "method": e.method,
                              "record_every": e.record_every, "samples": e.samples,
                              "initial": _initial_dict(e.initial)}
        if e.dt is not None:
            ev["dt"] = e.dt
        out["evolve"] = ev
    out["postselect"] = {"outcome": cfg.postselect.outcome,
                         "initial": _initial_dict(cfg.postselect.initial)}
    return out


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))
