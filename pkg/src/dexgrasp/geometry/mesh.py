"""Triangle meshes, primitive builders and mesh file I/O (OBJ, binary PLY)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from ..errors import InvalidMesh


def normalize(v, axis=-1, eps=1e-12):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.maximum(n, eps)


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh with per-vertex normals.

    ``face_parts`` optionally assigns an integer part label to every face and
    ``part_names`` maps those labels to names (taken from OBJ ``g``/``o``
    groups when loading).
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: Optional[np.ndarray] = None
    face_parts: Optional[np.ndarray] = None
    part_names: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidMesh("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.normals is None:
            n = _vertex_normals(v, f)
        else:
            n = normalize(np.asarray(self.normals, dtype=float).reshape(-1, 3))
            if n.shape != v.shape:
                raise InvalidMesh("normals must match vertices")
        object.__setattr__(self, "normals", n)
        if self.face_parts is not None:
            fp = np.asarray(self.face_parts, dtype=np.int64).reshape(-1)
            if fp.shape[0] != f.shape[0]:
                raise InvalidMesh("face_parts must have one entry per face")
            object.__setattr__(self, "face_parts", fp)
        for arr in (v, f, n):
            arr.setflags(write=False)

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @cached_property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) corner coordinates."""
        return self.vertices[self.faces]

    @cached_property
    def face_normals(self) -> np.ndarray:
        t = self.triangles
        return normalize(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]))

    @cached_property
    def face_areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    @cached_property
    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two faces."""
        if self.n_faces == 0:
            return False
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        # welded by position so split-normal meshes still count as closed
        keys = np.unique(np.round(self.vertices, 9), axis=0, return_inverse=True)[1].reshape(-1)
        e = np.sort(keys[e], axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    @cached_property
    def volume(self) -> float:
        t = self.triangles
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    @property
    def bounds(self) -> np.ndarray:
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def transformed(self, rotation=None, translation=None) -> "TriMesh":
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
        return TriMesh(self.vertices @ R.T + t, self.faces, self.normals @ R.T,
                       self.face_parts, dict(self.part_names))


def _vertex_normals(v, f):
    n = np.zeros_like(v)
    if len(f):
        t = v[f]
        fn = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])  # area weighted
        for k in range(3):
            np.add.at(n, f[:, k], fn)
    bad = np.linalg.norm(n, axis=1) < 1e-20
    n[bad] = (0.0, 0.0, 1.0)
    return normalize(n)


def concatenate(meshes: Sequence[TriMesh]) -> TriMesh:
    verts, faces, normals, parts = [], [], [], []
    names: Dict[int, str] = {}
    offset = 0
    has_parts = any(m.face_parts is not None for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        normals.append(m.normals)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
        if has_parts:
            parts.append(m.face_parts if m.face_parts is not None else np.full(m.n_faces, -1))
        names.update(m.part_names)
    return TriMesh(np.concatenate(verts), np.concatenate(faces), np.concatenate(normals),
                   np.concatenate(parts) if has_parts else None, names)


# ---------------------------------------------------------------- primitives

def box(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), part=None, name=None) -> TriMesh:
    """Axis-aligned box with split vertices so every face has its own normal."""
    h = 0.5 * np.asarray(extents, dtype=float)
    c = np.asarray(center, dtype=float)
    verts, faces, normals = [], [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u, w = (axis + 1) % 3, (axis + 2) % 3
            if sign < 0:
                u, w = w, u
            quad = []
            for du, dw in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                p = np.zeros(3)
                p[axis] = sign * h[axis]
                p[u] = du * h[u]
                p[w] = dw * h[w]
                quad.append(p + c)
            base = len(verts)
            verts.extend(quad)
            nrm = np.zeros(3)
            nrm[axis] = sign
            normals.extend([nrm] * 4)
            faces.extend([(base, base + 1, base + 2), (base, base + 2, base + 3)])
    return _with_part(TriMesh(np.array(verts), np.array(faces), np.array(normals)), part, name)


def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0), part=None, name=None) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [tuple(x) for x in normalize(np.array(v, dtype=float))]
    faces = f
    for _ in range(subdivisions):
        cache: Dict[tuple, int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = normalize(np.add(verts[a], verts[b]) / 2.0)
                cache[key] = len(verts)
                verts.append(tuple(p))
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    unit = np.array(verts)
    mesh = TriMesh(unit * radius + np.asarray(center, dtype=float), np.array(faces), unit)
    return _with_part(mesh, part, name)


def cylinder(radius=0.5, height=1.0, sections=48, center=(0.0, 0.0, 0.0), axis=2,
             caps_part=None, side_part=None, names=None, segments=1) -> TriMesh:
    """Closed cylinder along coordinate ``axis``; side and caps may carry distinct parts.

    ``segments`` splits the side wall into that many equal bands along the axis.
    """
    ang = 2.0 * np.pi * np.arange(sections) / sections
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=1) * radius
    z0, z1 = -0.5 * height, 0.5 * height
    verts, normals, faces, parts = [], [], [], []
    # side: split from caps to keep radial normals
    for z in np.linspace(z0, z1, segments + 1):
        for (x, y), a in zip(ring, ang):
            verts.append((x, y, z))
            normals.append((np.cos(a), np.sin(a), 0.0))
    for s in range(segments):
        b, t = s * sections, (s + 1) * sections
        for i in range(sections):
            j = (i + 1) % sections
            faces += [(b + i, b + j, t + j), (b + i, t + j, t + i)]
            parts += [side_part, side_part]
    for z, sign in ((z0, -1.0), (z1, 1.0)):
        base = len(verts)
        verts.append((0.0, 0.0, z))
        normals.append((0.0, 0.0, sign))
        for x, y in ring:
            verts.append((x, y, z))
            normals.append((0.0, 0.0, sign))
        for i in range(sections):
            j = (i + 1) % sections
            if sign > 0:
                faces.append((base, base + 1 + i, base + 1 + j))
            else:
                faces.append((base, base + 1 + j, base + 1 + i))
            parts.append(caps_part)
    verts = np.array(verts)
    normals = np.array(normals)
    # cyclic relabelling keeps handedness, so winding stays outward
    order = [(axis + 1) % 3, (axis + 2) % 3, axis]
    v_out, n_out = np.empty_like(verts), np.empty_like(normals)
    v_out[:, order] = verts
    n_out[:, order] = normals
    verts, normals = v_out, n_out
    fp = None
    if side_part is not None or caps_part is not None:
        fp = np.array([-1 if p is None else p for p in parts])
    return TriMesh(verts + np.asarray(center, dtype=float), np.array(faces), normals, fp,
                   dict(names or {}))


def _with_part(mesh, part, name):
    if part is None:
        return mesh
    return TriMesh(mesh.vertices, mesh.faces, mesh.normals, np.full(mesh.n_faces, part),
                   {part: name or f"part{part}"})


# ---------------------------------------------------------------- file I/O

def load_mesh(path) -> TriMesh:
    path = Path(path)
    if not path.exists():
        raise InvalidMesh(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    readers = {".obj": read_obj, ".ply": read_ply}
    if suffix not in readers:
        raise InvalidMesh(f"unsupported mesh format: {suffix}")
    try:
        mesh = readers[suffix](path)
    except (ValueError, IndexError, UnicodeDecodeError) as exc:
        raise InvalidMesh(f"cannot parse mesh {path}: {exc}") from exc
    if mesh.n_faces == 0:
        raise InvalidMesh(f"mesh has no faces: {path}")
    return mesh


def read_obj(path) -> TriMesh:
    """ASCII OBJ reader. Faces are fan-triangulated; ``g``/``o`` groups become parts."""
    verts, vnorms = [], []
    faces, face_vn, face_group = [], [], []
    groups: Dict[str, int] = {}
    current = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "vn":
                vnorms.append([float(x) for x in parts[1:4]])
            elif tag in ("g", "o"):
                name = " ".join(parts[1:]) or "default"
                current = groups.setdefault(name, len(groups))
            elif tag == "f":
                idx, nidx = [], []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    i = int(fields[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                    if len(fields) >= 3 and fields[2]:
                        j = int(fields[2])
                        nidx.append(j - 1 if j > 0 else len(vnorms) + j)
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
                    face_vn.append((nidx[0], nidx[k], nidx[k + 1]) if len(nidx) == len(idx) else None)
                    face_group.append(current)
    v = np.array(verts, dtype=float).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    normals = None
    if vnorms and all(x is not None for x in face_vn):
        # one normal per vertex; last writer wins for vertices shared with different vn
        vn = np.array(vnorms, dtype=float)
        normals = np.zeros_like(v)
        for tri, tn in zip(f, face_vn):
            normals[tri] = vn[list(tn)]
    face_parts, names = None, {}
    if groups:
        face_parts = np.array([-1 if g is None else g for g in face_group], dtype=np.int64)
        names = {i: n for n, i in groups.items()}
    return TriMesh(v, f, normals, face_parts, names)


def write_obj(mesh: TriMesh, path) -> None:
    lines = []
    for p in mesh.vertices:
        lines.append("v " + " ".join(repr(float(x)) for x in p))
    for n in mesh.normals:
        lines.append("vn " + " ".join(repr(float(x)) for x in n))
    group = None
    for fi, (a, b, c) in enumerate(mesh.faces + 1):
        if mesh.face_parts is not None:
            g = int(mesh.face_parts[fi])
            if g != group:
                group = g
                lines.append(f"g {mesh.part_names.get(g, f'part{g}')}")
        lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B", "short": "h", "int16": "h",
    "ushort": "H", "uint16": "H", "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def read_ply(path) -> TriMesh:
    """Binary little-endian PLY with a vertex element and a face list element."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise InvalidMesh("not a PLY file")
        elements = []
        fmt = None
        while True:
            line = fh.readline()
            if not line:
                raise InvalidMesh("truncated PLY header")
            tok = line.decode("ascii").split()
            if not tok:
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append((tok[1], int(tok[2]), []))
            elif tok[0] == "property":
                elements[-1][2].append(tok[1:])
            elif tok[0] == "end_header":
                break
        if fmt != "binary_little_endian":
            raise InvalidMesh(f"unsupported PLY format: {fmt}")
        data = {}
        for name, count, props in elements:
            if all(p[0] != "list" for p in props):
                dtype = np.dtype([(p[1], "<" + _PLY_TYPES[p[0]]) for p in props])
                data[name] = np.frombuffer(fh.read(dtype.itemsize * count), dtype=dtype, count=count)
            else:
                rows = []
                for _ in range(count):
                    row = []
                    for p in props:
                        if p[0] == "list":
                            ct, it = _PLY_TYPES[p[1]], _PLY_TYPES[p[2]]
                            (k,) = struct.unpack("<" + ct, fh.read(struct.calcsize(ct)))
                            row.append(struct.unpack("<" + it * k, fh.read(struct.calcsize(it) * k)))
                        else:
                            t = _PLY_TYPES[p[0]]
                            row.append(struct.unpack("<" + t, fh.read(struct.calcsize(t)))[0])
                    rows.append(row)
                data[name] = rows
    vert = data["vertex"]
    v = np.stack([vert["x"], vert["y"], vert["z"]], axis=1).astype(float)
    normals = None
    if "nx" in vert.dtype.names:
        normals = np.stack([vert["nx"], vert["ny"], vert["nz"]], axis=1).astype(float)
    faces = []
    face_props = next(p for n, _, p in elements if n == "face")
    li = [i for i, p in enumerate(face_props) if p[0] == "list"][0]
    for row in data.get("face", []):
        idx = row[li]
        for k in range(1, len(idx) - 1):
            faces.append((idx[0], idx[k], idx[k + 1]))
    return TriMesh(v, np.array(faces, dtype=np.int64).reshape(-1, 3), normals)


def write_ply(mesh: TriMesh, path) -> None:
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(mesh.vertices)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\nend_header\n"
    )
    vert = np.concatenate([mesh.vertices, mesh.normals], axis=1).astype("<f4")
    face = np.zeros(mesh.n_faces, dtype=[("n", "u1"), ("i", "<i4", (3,))])
    face["n"] = 3
    face["i"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(vert.tobytes())
        fh.write(face.tobytes())
