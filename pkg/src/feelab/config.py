"""JSON scenario files.

A config is one JSON object. ``distribution`` and ``demand`` are required;
everything else falls back to the scenario defaults::

    {
      "name": "my-run",
      "mechanism": "twdpp",
      "distribution": {"kind": "uniform", "lo": 0, "hi": 200},
      "demand": {"kind": "constant", "n": 200},
      "m": 100, "alpha": 0.0625, "delta": 1.0, "q0": 10.0,
      "horizon": 10000, "burn_in": 2000, "seed": 0,
      "miner": "honest", "bidder": {"kind": "truthful"},
      "window": 1000, "drift_tol": null, "output": null
    }

A step demand profile is ``{"kind": "step", "breakpoints": [[1, 200], [3334, 600]]}``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path
from types import SimpleNamespace

from .experiments import ConfigError, ScenarioConfig, validate_scenario
from .values import Constant, PointMass, demand_from_dict, distribution_from_dict

FIELDS = tuple(f.name for f in dataclasses.fields(ScenarioConfig))
REQUIRED = ("distribution", "demand")


def config_to_dict(cfg: ScenarioConfig) -> dict:
    out = {}
    for name in FIELDS:
        value = getattr(cfg, name)
        if name in ("distribution", "demand"):
            value = value.to_dict()
        out[name] = value
    return out


def config_from_dict(data: dict, source: str | None = None) -> ScenarioConfig:
    """Validate ``data`` and build a config, reporting every problem at once."""
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a JSON object"], source)
    errors = [f"unknown key {k!r}" for k in data if k not in FIELDS]
    errors += [f"missing required key {k!r}" for k in REQUIRED if k not in data]

    kwargs = {k: v for k, v in data.items() if k in FIELDS}
    kwargs.setdefault("name", "custom")
    kwargs.setdefault("mechanism", "twdpp")
    if kwargs.get("bidder") is None:
        kwargs.pop("bidder", None)
    for key, build, placeholder in (
        ("distribution", distribution_from_dict, PointMass(1.0)),
        ("demand", demand_from_dict, Constant(1)),
    ):
        if key not in kwargs:
            kwargs[key] = placeholder
            continue
        try:
            kwargs[key] = build(kwargs[key])
        except (ValueError, TypeError, KeyError) as exc:
            errors.append(f"{key}: {exc}")
            kwargs[key] = placeholder

    errors += validate_scenario(SimpleNamespace(**{**_defaults(), **kwargs}))
    if errors:
        raise ConfigError(errors, source)
    return ScenarioConfig(**kwargs)


def _defaults() -> dict:
    out = {}
    for f in dataclasses.fields(ScenarioConfig):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc.strerror}"], str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"], str(path)) from exc
    return config_from_dict(data, str(path))


def save_config(cfg: ScenarioConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
