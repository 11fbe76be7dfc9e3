"""Software z-buffer rasteriser with flat headlight shading."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..geometry.cloud import OrientedPointCloud
from ..geometry.mesh import TriMesh, normalize
from .camera import PinholeCamera

NEAR = 1e-4
BACKGROUND = (255, 255, 255)


@dataclass
class RenderResult:
    color: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float32 metres, 0 = background
    face_index: np.ndarray  # (H, W) int64, -1 = background
    mesh_index: np.ndarray  # (H, W) int64, -1 = background

    @property
    def silhouette(self) -> np.ndarray:
        return self.depth > 0


def render(meshes: Sequence[TriMesh], camera: PinholeCamera, colors: Optional[Sequence] = None,
           background=BACKGROUND) -> RenderResult:
    """Rasterise ``meshes``; deterministic, no anti-aliasing.

    Pixel centres sit at integer coordinates; a pixel is covered when its
    centre lies inside the projected triangle (top-left ties included).
    Depth is interpolated perspective-correctly.
    """
    if isinstance(meshes, TriMesh):
        meshes = [meshes]
    H, W = camera.height, camera.width
    zbuf = np.full((H, W), np.inf)
    face_id = np.full((H, W), -1, dtype=np.int64)
    mesh_id = np.full((H, W), -1, dtype=np.int64)
    shade = np.zeros((H, W))
    cam_center = camera.center
    for mi, mesh in enumerate(meshes):
        if mesh.n_faces == 0:
            continue
        u, v, z = camera.project(mesh.vertices)
        tri = mesh.faces
        fn = mesh.face_normals
        centers = mesh.triangles.mean(axis=1)
        view = normalize(cam_center - centers)
        lam = 0.25 + 0.75 * np.abs(np.einsum("ij,ij->i", fn, view))
        for f, (a, b, c) in enumerate(tri):
            za, zb, zc = z[a], z[b], z[c]
            if za <= NEAR or zb <= NEAR or zc <= NEAR:
                continue
            xa, ya, xb, yb, xc, yc = u[a], v[a], u[b], v[b], u[c], v[c]
            area = (xb - xa) * (yc - ya) - (xc - xa) * (yb - ya)
            if abs(area) < 1e-12:
                continue
            x0 = max(int(np.ceil(min(xa, xb, xc))), 0)
            x1 = min(int(np.floor(max(xa, xb, xc))), W - 1)
            y0 = max(int(np.ceil(min(ya, yb, yc))), 0)
            y1 = min(int(np.floor(max(ya, yb, yc))), H - 1)
            if x0 > x1 or y0 > y1:
                continue
            px, py = np.meshgrid(np.arange(x0, x1 + 1, dtype=float), np.arange(y0, y1 + 1, dtype=float))
            w0 = ((xb - px) * (yc - py) - (xc - px) * (yb - py)) / area
            w1 = ((xc - px) * (ya - py) - (xa - px) * (yc - py)) / area
            w2 = 1.0 - w0 - w1
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            if not inside.any():
                continue
            inv_z = w0 / za + w1 / zb + w2 / zc
            depth = 1.0 / inv_z
            iy, ix = np.nonzero(inside)
            iy, ix = iy + y0, ix + x0
            d = depth[inside]
            closer = d < zbuf[iy, ix]
            iy, ix, d = iy[closer], ix[closer], d[closer]
            zbuf[iy, ix] = d
            face_id[iy, ix] = f
            mesh_id[iy, ix] = mi
            shade[iy, ix] = lam[f]
    hit = mesh_id >= 0
    base = np.tile(np.asarray(background, dtype=float), (H, W, 1))
    if colors is None:
        colors = [(170, 170, 170)] * len(meshes)
    palette = np.asarray(colors, dtype=float).reshape(-1, 3)
    if hit.any():
        base[hit] = palette[mesh_id[hit]] * shade[hit][:, None]
    depth = np.where(hit, zbuf, 0.0).astype(np.float32)
    return RenderResult(np.clip(np.round(base), 0, 255).astype(np.uint8), depth, face_id, mesh_id)


def back_project(mask, depth, camera: PinholeCamera) -> OrientedPointCloud:
    """One world point per masked pixel with positive depth; normals face the camera."""
    mask = np.asarray(mask, dtype=bool)
    depth = np.asarray(depth, dtype=float)
    if mask.shape != depth.shape:
        raise ValueError("mask and depth shapes differ")
    iy, ix = np.nonzero(mask & (depth > 0))
    pts = camera.unproject(ix, iy, depth[iy, ix])
    nrm = normalize(camera.center - pts) if len(pts) else np.zeros((0, 3))
    return OrientedPointCloud(pts, nrm)
