"""Pipeline configuration: one JSON file, schema-checked at load, with per-stage backend routing."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import jsonschema

from .contact import LiftConfig
from .errors import ConfigError
from .evaluation.simulation import SimConfig
from .reasoner.backends import STAGES
from .refine.energies import EnergyWeights
from .refine.optimizer import OptimizerConfig
from .verification import VerificationConfig

BACKEND_KINDS = ("fixture", "heuristic", "http")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}


def _obj(props: Dict[str, Any]) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = _obj({
    "seed": {"type": "integer"},
    "sample_count": _INT1,
    "backend": _obj({
        "default": {"enum": list(BACKEND_KINDS)},
        "stages": {"type": "object", "propertyNames": {"enum": list(STAGES)},
                   "additionalProperties": {"enum": list(BACKEND_KINDS)}},
        "fixture_path": {"type": ["string", "null"]},
        "http": _obj({"url": {"type": "string"}, "model": {"type": "string"}, "timeout": _POS,
                      "max_in_flight": _INT1}),
    }),
    "render": _obj({"width": _INT1, "height": _INT1, "focal": _POS, "fill": _POS, "view": _VEC3,
                    "imagination_scale": _POS}),
    "contact": _obj({"depth_tolerance": _POS, "r_near": _POS, "kmeans_k": _INT1, "knn_k": _INT1,
                     "point_radius": _NONNEG, "seed": {"type": "integer"},
                     "grazing_cos": {"type": "number", "minimum": -1, "maximum": 1}, "contour_points": {"type": "integer", "minimum": 2},
                     "force_point_level": {"type": "boolean"}, "skip_point_level": {"type": "boolean"}}),
    "reasoner": _obj({"hull_offset": _NONNEG, "rotations": {"type": "integer", "minimum": 1, "maximum": 12},
                      "world_up": _VEC3}),
    "verification": _obj({"tau_n": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                          "tau_m": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                          "radius": _NONNEG, "max_neighbors": _INT1, "always_filter": {"type": "boolean"}}),
    "weights": _obj({k: _NONNEG for k in ("cont_fun", "cont_unf", "cmap", "pen", "spen", "fc", "pip")}),
    "optimizer": _obj({"iterations": _INT1, "learning_rate": _POS, "decay": _POS, "decay_every": _INT1,
                       "beta1": _NONNEG, "beta2": _NONNEG, "eps": _POS, "sigma": _POS}),
    "simulation": _obj({"dt": _POS, "steps": _INT1, "stiffness": _POS, "friction": _NONNEG,
                        "tangential_damping": _NONNEG, "normal_damping": _NONNEG, "mass": _POS,
                        "gravity": {"type": "boolean"}, "settle_time": _NONNEG}),
})


@dataclass(frozen=True)
class BackendConfig:
    default: str = "heuristic"
    stages: Dict[str, str] = field(default_factory=dict)
    fixture_path: Optional[str] = None
    http: Dict[str, Any] = field(default_factory=dict)

    def kind_for(self, stage: str) -> str:
        return self.stages.get(stage, self.default)


@dataclass(frozen=True)
class RenderConfig:
    width: int = 640
    height: int = 480
    focal: float = 600.0
    fill: float = 0.6
    view: Tuple[float, float, float] = (0.0, 0.35, 1.0)
    imagination_scale: float = 0.5


@dataclass(frozen=True)
class ContactConfig:
    depth_tolerance: float = 0.005
    r_near: float = 0.02
    kmeans_k: int = 8
    knn_k: int = 5
    point_radius: float = 0.01
    seed: int = 0
    grazing_cos: float = 0.2
    contour_points: int = 20
    force_point_level: bool = False
    skip_point_level: bool = False

    def lift(self) -> LiftConfig:
        return LiftConfig(depth_tolerance=self.depth_tolerance, r_near=self.r_near, kmeans_k=self.kmeans_k,
                          knn_k=self.knn_k, point_radius=self.point_radius, seed=self.seed,
                          grazing_cos=self.grazing_cos)


@dataclass(frozen=True)
class ReasonerConfig:
    hull_offset: float = 0.10  # m
    rotations: int = 4
    world_up: Tuple[float, float, float] = (0.0, 1.0, 0.0)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    sample_count: int = 4096
    backend: BackendConfig = BackendConfig()
    render: RenderConfig = RenderConfig()
    contact: ContactConfig = ContactConfig()
    reasoner: ReasonerConfig = ReasonerConfig()
    verification: VerificationConfig = VerificationConfig()
    weights: EnergyWeights = EnergyWeights()
    optimizer: OptimizerConfig = OptimizerConfig()
    simulation: SimConfig = SimConfig()

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("render", "reasoner"):
            for kk, vv in d[k].items():
                if isinstance(vv, tuple):
                    d[k][kk] = list(vv)
        return d

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "PipelineConfig":
        data = dict(data or {})
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
        sections = {f.name: f for f in fields(cls)}
        kwargs: Dict[str, Any] = {}
        for name, value in data.items():
            default = sections[name].default
            if isinstance(value, dict) and hasattr(default, "__dataclass_fields__"):
                value = {k: (tuple(v) if isinstance(v, list) and k in ("view", "world_up") else v)
                         for k, v in value.items()}
                try:
                    kwargs[name] = replace(default, **value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"config section '{name}': {exc}") from exc
            else:
                kwargs[name] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)
