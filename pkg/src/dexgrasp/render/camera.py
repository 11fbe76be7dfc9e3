"""Pinhole camera (OpenCV convention: x right, y down, z forward)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidCamera
from ..geometry.mesh import normalize

DEFAULT_WIDTH = 640
DEFAULT_HEIGHT = 480
DEFAULT_FOCAL = 600.0
DEFAULT_FILL = 0.6
DEFAULT_VIEW = (0.0, 0.35, 1.0)  # object-to-camera direction for auto framing


@dataclass(frozen=True, eq=False)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # world -> camera
    translation: np.ndarray  # x_cam = R x_world + t

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidCamera("image size must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidCamera("focal lengths must be positive")
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise InvalidCamera("extrinsic rotation must be orthonormal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0), width=DEFAULT_WIDTH, height=DEFAULT_HEIGHT,
                fx=DEFAULT_FOCAL, fy=None) -> "PinholeCamera":
        eye, target = np.asarray(eye, dtype=float), np.asarray(target, dtype=float)
        z = target - eye
        if np.linalg.norm(z) < 1e-12:
            raise InvalidCamera("camera eye coincides with its target")
        z = normalize(z)
        up = np.asarray(up, dtype=float)
        if abs(z @ normalize(up)) > 0.999:
            up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        x = normalize(np.cross(z, up))  # image right
        y = np.cross(z, x)  # image down
        R = np.stack([x, y, z])
        return cls(fx, fx if fy is None else fy, (width - 1) / 2.0, (height - 1) / 2.0, width, height,
                   R, -R @ eye)

    @classmethod
    def auto_frame(cls, points, view=DEFAULT_VIEW, fill=DEFAULT_FILL, width=DEFAULT_WIDTH,
                   height=DEFAULT_HEIGHT, fx=DEFAULT_FOCAL) -> "PinholeCamera":
        """Look at the bounding-sphere centre so the sphere spans ``fill`` of the image height."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        center = 0.5 * (lo + hi)
        radius = max(float(np.linalg.norm(pts - center, axis=1).max()), 1e-6)
        dist = 2.0 * radius * fx / (fill * height)
        return cls.look_at(center + dist * normalize(np.asarray(view, dtype=float)), center,
                           width=width, height=height, fx=fx)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def scaled(self, factor: float) -> "PinholeCamera":
        w, h = max(1, int(round(self.width * factor))), max(1, int(round(self.height * factor)))
        return PinholeCamera(self.fx * factor, self.fy * factor, (w - 1) / 2.0, (h - 1) / 2.0, w, h,
                             self.rotation, self.translation)

    def to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float).reshape(-1, 3) @ self.rotation.T + self.translation

    def project(self, points):
        """World points -> (u, v, z) with pixel centres at integer coordinates."""
        pc = self.to_camera(points)
        z = pc[:, 2]
        safe = np.where(np.abs(z) > 1e-12, z, 1e-12)
        u = self.fx * pc[:, 0] / safe + self.cx
        v = self.fy * pc[:, 1] / safe + self.cy
        return u, v, z

    def unproject(self, u, v, z) -> np.ndarray:
        u, v, z = (np.asarray(a, dtype=float).reshape(-1) for a in (u, v, z))
        pc = np.stack([(u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z], axis=1)
        return (pc - self.translation) @ self.rotation

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "width": self.width,
                "height": self.height, "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d) -> "PinholeCamera":
        try:
            return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), int(d["width"]),
                       int(d["height"]), np.array(d["rotation"], dtype=float),
                       np.array(d["translation"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidCamera(f"bad camera description: {exc}") from exc
