"""Config files (TOML or JSON) with dotted ``key=value`` overrides."""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import ConfigError, ControllerConfig
from .harness import HarnessConfig
from .stream import StreamConfig

__all__ = [
    "SECTIONS",
    "load_config_dict",
    "apply_overrides",
    "parse_override",
    "config_from_dict",
    "load_config",
]

SECTIONS = ("harness", "stream", "controller", "verify")

_HARNESS_KEYS = {f.name for f in fields(HarnessConfig)} - {"stream", "controller"}
_STREAM_KEYS = {f.name for f in fields(StreamConfig)}
_CONTROLLER_KEYS = {f.name for f in fields(ControllerConfig)}


def _verify_keys() -> set:
    from .verify import VerifyConfig

    return {f.name for f in fields(VerifyConfig)}


def _known_keys(section: str) -> set:
    if section == "verify":
        return _verify_keys()
    return {"harness": _HARNESS_KEYS, "stream": _STREAM_KEYS, "controller": _CONTROLLER_KEYS}[section]


def load_config_dict(path) -> dict:
    """Parse a .toml or .json file into a section dict. Raises FileNotFoundError/ConfigError."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(str(p), f"cannot parse: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(str(p), "top level must be a table")
    _check_keys(data)
    return data


def _check_keys(data: Mapping) -> None:
    for section, body in data.items():
        if section not in SECTIONS:
            raise ConfigError(section, f"unknown section; expected one of {SECTIONS}")
        if not isinstance(body, Mapping):
            raise ConfigError(section, "section must be a table")
        known = _known_keys(section)
        for key in body:
            if key not in known:
                raise ConfigError(f"{section}.{key}", "unknown key")


def parse_override(text: str) -> tuple[str, str, Any]:
    """``section.key=value`` with the value read as a TOML literal (bare words become strings)."""
    if "=" not in text:
        raise ConfigError(text, "override must look like section.key=value")
    lhs, rhs = text.split("=", 1)
    lhs = lhs.strip()
    if lhs.count(".") != 1:
        raise ConfigError(lhs, "override key must be section.key")
    section, key = lhs.split(".")
    if section not in SECTIONS:
        raise ConfigError(lhs, f"unknown section; expected one of {SECTIONS}")
    if key not in _known_keys(section):
        raise ConfigError(lhs, "unknown key")
    try:
        value = tomllib.loads(f"v = {rhs.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = rhs.strip()
    return section, key, value


def apply_overrides(data: Mapping, overrides: Sequence[str]) -> dict:
    out = copy.deepcopy(dict(data))
    for text in overrides:
        section, key, value = parse_override(text)
        out.setdefault(section, {})[key] = value
    return out


def config_from_dict(data: Mapping) -> HarnessConfig:
    """Build the harness config; the ``verify`` section is ignored here."""
    _check_keys(data)
    try:
        stream = StreamConfig(**dict(data.get("stream", {})))
        controller = ControllerConfig(**dict(data.get("controller", {})))
        return HarnessConfig(stream=stream, controller=controller, **dict(data.get("harness", {})))
    except TypeError as exc:
        # wrong value types surface as comparison errors inside validation
        raise ConfigError("config", f"bad value type: {exc}") from exc


def load_config(path=None, overrides: Sequence[str] = ()) -> tuple[HarnessConfig, dict]:
    """Returns the harness config and the raw (overridden) section dict."""
    data = load_config_dict(path) if path is not None else {}
    data = apply_overrides(data, overrides)
    return config_from_dict(data), data
