"""Named canonical finger postures used to initialise refinement."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List

import numpy as np

from ..errors import ConfigError
from .kinematics import N_JOINTS, HandKinematics

# joint order: thumb (abduction, cmc flex, mcp, ip) then index, middle, ring, little (mcp, pip, dip)
_DEFAULTS = (
    ("power", "Whole-hand wrap: all fingers curl around a handle or body with the thumb closing over them.",
     (0.55, 0.70, 0.30, 0.30, 0.60, 0.70, 0.45, 0.60, 0.70, 0.45, 0.60, 0.70, 0.45, 0.60, 0.70, 0.45)),
    ("precision-pinch", "Thumb tip opposes the index fingertip; remaining fingers loosely flexed.",
     (0.80, 0.70, 0.35, 0.40, 0.55, 0.60, 0.40, 0.35, 0.45, 0.30, 0.30, 0.45, 0.30, 0.30, 0.45, 0.30)),
    ("lateral-pinch", "Thumb pad presses against the side of a curled index finger, like holding a key.",
     (-0.20, 0.15, 0.20, 0.25, 0.90, 1.00, 0.60, 0.95, 1.05, 0.60, 0.95, 1.05, 0.60, 0.95, 1.05, 0.60)),
    ("tripod", "Thumb, index and middle fingertips meet around a small object; ring and little tucked.",
     (0.75, 0.65, 0.35, 0.35, 0.60, 0.60, 0.40, 0.55, 0.60, 0.40, 0.85, 0.95, 0.55, 0.85, 0.95, 0.55)),
    ("hook", "Fingers bent at the middle joints to hang from a handle; thumb relaxed and extended.",
     (0.00, 0.00, 0.00, 0.00, 0.10, 1.30, 0.90, 0.10, 1.30, 0.90, 0.10, 1.30, 0.90, 0.10, 1.30, 0.90)),
)


@dataclass(frozen=True, eq=False)
class GraspType:
    name: str
    theta: np.ndarray
    description: str

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float).reshape(-1)
        if th.shape != (N_JOINTS,):
            raise ConfigError(f"grasp type '{self.name}' needs {N_JOINTS} joint angles")
        object.__setattr__(self, "theta", th)


class GraspLibrary:
    """Ordered collection of grasp types keyed by name."""

    def __init__(self, types: Iterable[GraspType]):
        self._types: Dict[str, GraspType] = {}
        for t in types:
            if t.name in self._types:
                raise ConfigError(f"duplicate grasp type '{t.name}'")
            self._types[t.name] = t
        if not self._types:
            raise ConfigError("grasp library is empty")

    def __len__(self):
        return len(self._types)

    def __iter__(self):
        return iter(self._types.values())

    def __contains__(self, name):
        return name in self._types

    def __getitem__(self, name) -> GraspType:
        return self._types[name]

    @property
    def names(self) -> List[str]:
        return list(self._types)

    def validate(self, kin: HandKinematics) -> None:
        lo, hi = kin.limits.T
        for t in self:
            if np.any(t.theta < lo) or np.any(t.theta > hi):
                raise ConfigError(f"grasp type '{t.name}' violates joint limits")

    def to_json(self) -> str:
        return json.dumps([{"name": t.name, "description": t.description, "theta": t.theta.tolist()}
                           for t in self], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GraspLibrary":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"grasp library is not valid JSON: {exc}") from exc
        return cls(GraspType(r["name"], r["theta"], r.get("description", "")) for r in rows)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GraspLibrary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def default_library() -> GraspLibrary:
    return GraspLibrary(GraspType(n, np.array(th), d) for n, d, th in _DEFAULTS)
