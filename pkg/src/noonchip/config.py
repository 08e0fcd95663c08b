"""Configuration files: flat TOML with dotted ``section.key = value`` entries.

Every documented key maps onto one ``DeviceConfig`` field, except
``run.calibration`` (path of a calibration CSV, needed when the
interferometer is set by voltage). Unknown keys are errors.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chip import DeviceConfig

# dotted key -> DeviceConfig field
KEY_MAP = {
    "clock.pump_rep_rate": "pump_rep_rate",
    "source.mean_pairs": "mean_pairs",
    "source.pair_statistics": "pair_statistics",
    "source.fixed_pairs": "fixed_pairs",
    "source.pump_asymmetry": "pump_asymmetry",
    "chip.wdm_extinction_db": "wdm_extinction_db",
    "chip.mode_overlap": "mode_overlap",
    "chip.phase_rad": "phase_rad",
    "chip.voltage_v": "voltage_v",
    "chip.convention": "convention",
    "chip.cutoff": "cutoff",
    "chip.multiphoton_routing": "multiphoton_routing",
    "loss.herald_db": "loss_herald_db",
    "loss.signal_db": "loss_signal_db",
    "detector.dark_count_prob": "dark_count_prob",
    "detector.dead_time_pulses": "dead_time_pulses",
    "detector.jitter_ps": "jitter_ps",
    "run.seed": "seed",
}
EXTRA_KEYS = ("run.calibration",)
DOCUMENTED_KEYS = tuple(KEY_MAP) + EXTRA_KEYS
FIELD_TO_KEY = {v: k for k, v in KEY_MAP.items()}

_FLOAT_FIELDS = {
    "pump_rep_rate", "mean_pairs", "pump_asymmetry", "wdm_extinction_db", "mode_overlap",
    "phase_rad", "voltage_v", "dark_count_prob", "jitter_ps",
}
_INT_FIELDS = {"cutoff", "dead_time_pulses", "seed"}
_STR_FIELDS = {"pair_statistics", "convention", "multiphoton_routing"}
_LOSS_FIELDS = {"loss_herald_db", "loss_signal_db"}


class ConfigError(ValueError):
    """Invalid configuration; ``keys`` names the offending entries."""

    def __init__(self, message: str, keys=()):
        self.keys = tuple(keys)
        super().__init__(message)


def _flatten(table: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _coerce(key: str, field_name: str, value):
    if field_name in _FLOAT_FIELDS:
        if not _is_number(value):
            raise ConfigError(f"{key}: expected a number, got {value!r}", [key])
        return float(value)
    if field_name in _INT_FIELDS:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key}: expected an integer, got {value!r}", [key])
        return value
    if field_name in _STR_FIELDS:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}", [key])
        return value
    if field_name in _LOSS_FIELDS:
        if _is_number(value):
            return float(value)
        if isinstance(value, list) and value and all(_is_number(v) for v in value):
            return tuple(float(v) for v in value)
        raise ConfigError(f"{key}: expected a number or a list of stage losses, got {value!r}", [key])
    if field_name == "fixed_pairs":
        if isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value):
            return tuple(value)
        raise ConfigError(f"{key}: expected two integers, got {value!r}", [key])
    raise ConfigError(f"{key}: unsupported key", [key])


def config_from_mapping(flat: dict, base: DeviceConfig | None = None) -> tuple[DeviceConfig, dict]:
    """DeviceConfig and extra settings from a flat {dotted key: value} mapping."""
    unknown = sorted(k for k in flat if k not in DOCUMENTED_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}", unknown)
    changes = {}
    for key, value in flat.items():
        if key in KEY_MAP:
            changes[KEY_MAP[key]] = _coerce(key, KEY_MAP[key], value)
    extras = {k: flat[k] for k in EXTRA_KEYS if k in flat}
    if "run.calibration" in extras and not isinstance(extras["run.calibration"], str):
        raise ConfigError("run.calibration: expected a path string", ["run.calibration"])
    if "voltage_v" in changes and "phase_rad" not in changes:
        changes["phase_rad"] = None
    base = base or DeviceConfig()
    try:
        return base.replace(**changes), extras
    except ValueError as exc:
        bad = [FIELD_TO_KEY[f] for f in changes if f in str(exc)]
        raise ConfigError(f"invalid config: {exc}", bad) from None


def parse_config(text: str, base: DeviceConfig | None = None) -> tuple[DeviceConfig, dict]:
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    return config_from_mapping(_flatten(table), base)


def load_config(path, base: DeviceConfig | None = None) -> tuple[DeviceConfig, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def dump_config(config: DeviceConfig, extras: dict | None = None) -> str:
    """Serialize to dotted-key TOML; ``parse_config`` reads it back unchanged."""
    lines = []
    values = {f.name: getattr(config, f.name) for f in fields(config)}
    for key, name in KEY_MAP.items():
        value = values[name]
        if value is None:
            continue
        lines.append(f"{key} = {_format(value)}")
    for key, value in (extras or {}).items():
        lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines) + "\n"
