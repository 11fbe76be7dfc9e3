"""Small labelled test objects with task instructions.

All objects stand in a y-up world (gravity along -y) and are centred near the
origin. Part labels live on mesh faces so that annotations and ground-truth
point labels can be derived from them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Tuple

from .geometry.mesh import TriMesh, box, concatenate, cylinder, icosphere, write_obj


@dataclass(frozen=True)
class Fixture:
    name: str
    mesh: TriMesh
    instruction: str
    gt_parts: Tuple[str, ...] = ()
    twist: bool = False
    force_point_level: bool = False
    notes: Dict[str, str] = field(default_factory=dict)


def rod() -> Fixture:
    """Slender upright cylinder: side wall 'body', end caps 'cap'."""
    mesh = cylinder(radius=0.0125, height=0.16, sections=48, axis=1, side_part=0, caps_part=1,
                    names={0: "body", 1: "cap"})
    return Fixture("cylinder", mesh, "pick up the rod by its body", ("body",))


def ball() -> Fixture:
    """Small sphere split into an upper and a lower hemisphere."""
    mesh = icosphere(3, radius=0.0125)
    up = mesh.triangles.mean(axis=1)[:, 1] >= 0.0
    mesh = TriMesh(mesh.vertices, mesh.faces, mesh.normals, (~up).astype(int), {0: "upper half", 1: "lower half"})
    return Fixture("sphere", mesh, "pick up the ball", ("upper half", "lower half"))


def hammer() -> Fixture:
    """Hammer proxy: handle along x, box head at the +x end."""
    handle = cylinder(radius=0.012, height=0.20, sections=40, axis=0, side_part=0, caps_part=0,
                      names={0: "handle"})
    head = box((0.035, 0.03, 0.10), center=(0.1175, 0.0, 0.0), part=1, name="head")
    return Fixture("hammer", concatenate([handle, head]), "hammer a nail", ("handle",))


FIXTURES: Dict[str, Callable[[], Fixture]] = {"cylinder": rod, "sphere": ball, "hammer": hammer}


def get_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture '{name}' (choose from {sorted(FIXTURES)})") from None


def write_fixture(name: str, directory) -> Path:
    """Write the fixture mesh and a task file; returns the task file path."""
    fx = get_fixture(name)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    mesh_path = d / f"{fx.name}.obj"
    write_obj(fx.mesh, mesh_path)
    task = {"name": fx.name, "mesh": mesh_path.name, "instruction": fx.instruction,
            "gt_parts": list(fx.gt_parts), "twist": fx.twist}
    task_path = d / f"{fx.name}.task.json"
    task_path.write_text(json.dumps(task, indent=2, sort_keys=True), encoding="utf-8")
    return task_path
