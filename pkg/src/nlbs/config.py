"""Resource caps shared by the simulator modules."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

CAPS_ENV_VAR = "NBS_CAPS_OVERRIDE"


class CapacityError(RuntimeError):
    """A requested computation exceeds one of the configured caps."""


@dataclass(frozen=True)
class Caps:
    enumeration: int = 10**7
    permanent: int = 30
    optimizer_dim: int = 12
    classify_dim: int = 64

    def replace(self, **changes) -> "Caps":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, data: dict | None) -> "Caps":
        if not data:
            return cls()
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown cap fields: {sorted(unknown)}")
        values = {k: int(v) for k, v in data.items()}
        for k, v in values.items():
            if v < 1:
                raise ValueError(f"cap {k} must be positive, got {v}")
        return cls(**values)

    @classmethod
    def from_env(cls, base: "Caps | None" = None) -> "Caps":
        """Apply the JSON object in ``NBS_CAPS_OVERRIDE`` on top of ``base``."""
        base = base or cls()
        raw = os.environ.get(CAPS_ENV_VAR)
        if not raw:
            return base
        override = json.loads(raw)
        if not isinstance(override, dict):
            raise ValueError(f"{CAPS_ENV_VAR} must hold a JSON object")
        merged = dataclasses.asdict(base)
        merged.update(override)
        return cls.from_mapping(merged)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULT_CAPS = Caps()
