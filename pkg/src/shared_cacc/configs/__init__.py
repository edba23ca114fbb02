"""Shipped scenario configurations (JSON, SI units)."""

from __future__ import annotations

import json
from importlib import resources


def names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir()
                  if p.name.endswith(".json"))


def read(name: str) -> dict:
    f = resources.files(__name__) / f"{name}.json"
    if not f.is_file():
        raise FileNotFoundError(f"no shipped config named {name!r}; available: {', '.join(names())}")
    return json.loads(f.read_text())


def load(name: str):
    from ..simulator import ScenarioConfig
    return ScenarioConfig.from_dict(read(name))
