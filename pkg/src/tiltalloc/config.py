"""Line-oriented scenario configuration: ``section.key = value``.

Values are JSON literals in SI units (angles in radians). Blank lines and
lines starting with ``#`` are ignored. Sections:

- ``vehicle``: VehicleParams fields
- ``geometry``: RotorGeometry fields
- ``bounds``: ActuatorBounds fields
- ``allocator``: weights, fd_steps, slew_rates, relinearize_every
- ``controller``: ControllerGains fields
- ``scenario``: name, start_phase, altitude, airspeed, heading, duration, dt,
  seed, perturbation, wind, v_trans, v_back, transitions, failures

A failure is ``{"actuator": <name or index>, "value": u_f, "time": t,
"informed": bool}``; a transition is ``[time, "fixed_wing" | "multirotor"]``.
Serialization writes only values that differ from the defaults, in a fixed
order, so ``serialize(parse(serialize(s))) == serialize(s)``.
"""

import dataclasses
import json
import math

from .params import ACTUATOR_NAMES, ActuatorBounds, RotorGeometry, VehicleParams, actuator_index
from .sim.controller import ControllerGains
from .sim.scenario import FailureSpec, Scenario

SECTIONS = ("vehicle", "geometry", "bounds", "allocator", "controller", "scenario")
_ALLOCATOR_KEYS = ("weights", "fd_steps", "slew_rates", "relinearize_every")
_SCENARIO_KEYS = ("name", "start_phase", "altitude", "airspeed", "heading", "duration", "dt",
                  "seed", "perturbation", "wind", "v_trans", "v_back", "transitions", "failures")
_NESTED = {"vehicle": VehicleParams, "geometry": RotorGeometry, "bounds": ActuatorBounds,
           "controller": ControllerGains}


class ConfigError(ValueError):
    """Malformed configuration; carries the offending line and field."""

    def __init__(self, message, line=None, field=None, source="<config>"):
        self.line, self.field, self.source = line, field, source
        where = source if line is None else f"{source}:{line}"
        what = f"{field}: " if field else ""
        super().__init__(f"{where}: {what}{message}")


def _keys(section):
    if section in _NESTED:
        return tuple(f.name for f in dataclasses.fields(_NESTED[section]))
    return _ALLOCATOR_KEYS if section == "allocator" else _SCENARIO_KEYS


def _defaults(section):
    if section in _NESTED:
        return _NESTED[section]()
    return Scenario()


def _coerce(value, default, field):
    """Convert a JSON value to the type of ``default``."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError("expected true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError("expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("expected a number")
        if not math.isfinite(value):
            raise ValueError("expected a finite number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError("expected a string")
        return value
    if isinstance(default, tuple) or default is None:
        if default is None and value is None:
            return None
        if not isinstance(value, list):
            raise ValueError("expected a list")
        if default and len(value) != len(default):
            raise ValueError(f"expected {len(default)} entries, got {len(value)}")
        if default:
            return tuple(_coerce(v, d, field) for v, d in zip(value, default))
        return tuple(_number(v) for v in value)
    raise ValueError(f"unsupported field type for {field}")


def _number(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError("expected numbers")
    return float(v)


def _failure(obj):
    if not isinstance(obj, dict):
        raise ValueError("each failure must be an object")
    extra = set(obj) - {"actuator", "value", "time", "informed"}
    if extra:
        raise ValueError(f"unknown failure keys {sorted(extra)}")
    if "actuator" not in obj or "value" not in obj:
        raise ValueError("a failure needs 'actuator' and 'value'")
    informed = obj.get("informed", True)
    if not isinstance(informed, bool):
        raise ValueError("'informed' must be true or false")
    return FailureSpec(actuator_index(obj["actuator"]), _number(obj["value"]),
                       _number(obj.get("time", 0.0)), informed)


def _transition(obj):
    if not isinstance(obj, list) or len(obj) != 2 or not isinstance(obj[1], str):
        raise ValueError('each transition must be [time, "fixed_wing" | "multirotor"]')
    return (_number(obj[0]), obj[1])


def _scenario_value(key, value, default):
    if key == "failures":
        if not isinstance(value, list):
            raise ValueError("expected a list of failures")
        return tuple(_failure(v) for v in value)
    if key == "transitions":
        if not isinstance(value, list):
            raise ValueError("expected a list of transitions")
        return tuple(_transition(v) for v in value)
    if key in ("weights", "fd_steps", "slew_rates"):
        out = _coerce(value, None, key)
        if out is not None and len(out) != 12:
            raise ValueError("expected 12 entries")
        return out
    return _coerce(value, default, key)


def parse_config(text, source="<config>"):
    """Parse configuration text into a Scenario."""
    seen = {}
    values = {s: {} for s in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("expected 'section.key = value'", lineno, None, source)
        lhs, rhs = (part.strip() for part in line.split("=", 1))
        if "." not in lhs:
            raise ConfigError("key must be 'section.key'", lineno, lhs, source)
        section, key = lhs.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown section; valid: {', '.join(SECTIONS)}", lineno, lhs, source)
        if key not in _keys(section):
            raise ConfigError(f"unknown key; valid: {', '.join(_keys(section))}", lineno, lhs, source)
        if lhs in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[lhs]})", lineno, lhs, source)
        seen[lhs] = lineno
        try:
            value = json.loads(rhs)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"value is not valid JSON ({exc.msg})", lineno, lhs, source) from None
        default = getattr(_defaults(section), key)
        try:
            if section in ("allocator", "scenario"):
                values[section][key] = _scenario_value(key, value, default)
            else:
                values[section][key] = _coerce(value, default, lhs)
        except ValueError as exc:
            raise ConfigError(str(exc), lineno, lhs, source) from None

    nested = {}
    for section, cls in _NESTED.items():
        try:
            nested[section] = cls(**values[section])
        except (TypeError, ValueError) as exc:
            line = min((seen[f"{section}.{k}"] for k in values[section]), default=None)
            raise ConfigError(str(exc), line, section, source) from None
    kwargs = {**values["scenario"], **values["allocator"]}
    try:
        return Scenario(params=nested["vehicle"], geometry=nested["geometry"],
                        bounds=nested["bounds"], gains=nested["controller"], **kwargs)
    except ValueError as exc:
        keys = [f"scenario.{k}" for k in values["scenario"]] + [f"allocator.{k}" for k in values["allocator"]]
        line = min((seen[k] for k in keys), default=None)
        raise ConfigError(str(exc), line, "scenario", source) from None


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", None, None, str(path)) from None
    return parse_config(text, source=str(path))


def _to_json(value):
    if isinstance(value, tuple):
        return [_to_json(v) for v in value]
    if isinstance(value, FailureSpec):
        return {"actuator": ACTUATOR_NAMES[value.index], "value": value.value,
                "time": value.time, "informed": value.informed}
    return value


def _dump(value):
    return json.dumps(_to_json(value), separators=(", ", ": "))


def serialize_config(scenario):
    """Configuration text for ``scenario`` (non-default values only)."""
    lines = []
    objects = {"vehicle": scenario.params, "geometry": scenario.geometry,
               "bounds": scenario.bounds, "controller": scenario.gains}
    for section in SECTIONS:
        obj = objects.get(section, scenario)
        default = _defaults(section)
        for key in _keys(section):
            value = getattr(obj, key)
            if key in ("weights", "fd_steps", "slew_rates") and value is not None:
                value = tuple(float(v) for v in value)
            if value == getattr(default, key) and not (section == "scenario" and key == "name"):
                continue
            lines.append(f"{section}.{key} = {_dump(value)}")
    return "\n".join(lines) + "\n"


def save_config(scenario, path):
    with open(path, "w") as fh:
        fh.write(serialize_config(scenario))
