"""Visual prompts: contour marks, numbered region overlays and imagination composites."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage
from skimage import measure

from ..errors import EmptyMask
from ..geometry.mesh import TriMesh
from .camera import PinholeCamera
from .raster import render

HAND_COLOR = (230, 180, 150)
OBJECT_COLOR = (150, 170, 200)
MAX_CANDIDATES = 12
_REGION_COLORS = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48), (145, 30, 180),
    (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212), (0, 128, 128), (170, 110, 40),
], dtype=float)


@dataclass
class MarkedPoints:
    """Pixel points (x = column, y = row) with their numeric marks."""
    xy: np.ndarray
    ids: np.ndarray

    def __len__(self):
        return len(self.ids)

    def point(self, mark: int) -> np.ndarray:
        hit = np.flatnonzero(self.ids == mark)
        if len(hit) == 0:
            raise KeyError(f"no point with mark {mark}")
        return self.xy[hit[0]]


def _shoelace(c) -> float:
    return 0.5 * float(np.dot(c[:-1, 0], c[1:, 1]) - np.dot(c[1:, 0], c[:-1, 1]))


def largest_contour(mask) -> np.ndarray:
    """Closed outer contour (rows, cols) enclosing the largest area; first point repeated last."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMask("mask has no pixels")
    padded = np.pad(m, 1).astype(float)
    contours = measure.find_contours(padded, 0.5)
    best = max(contours, key=lambda c: abs(_shoelace(c)))
    best = best - 1.0
    if not np.allclose(best[0], best[-1]):
        best = np.vstack([best, best[:1]])
    # deterministic start: topmost, then leftmost
    body = best[:-1]
    s = int(np.lexsort((body[:, 1], body[:, 0]))[0])
    body = np.roll(body, -s, axis=0)
    return np.vstack([body, body[:1]])


def sample_mask_contour(mask, n: int) -> MarkedPoints:
    """``n`` points uniformly spaced by arc length along the largest outer contour."""
    if n < 2:
        raise ValueError("need at least two contour samples")
    c = largest_contour(mask)
    seg = np.linalg.norm(np.diff(c, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.arange(n) * cum[-1] / n
    rows = np.interp(targets, cum, c[:, 0])
    cols = np.interp(targets, cum, c[:, 1])
    return MarkedPoints(np.stack([cols, rows], axis=1), np.arange(1, n + 1))


def contour_arc_positions(mask, xy) -> np.ndarray:
    """Arc-length coordinate of each pixel point along the largest contour."""
    c = largest_contour(mask)
    seg = np.linalg.norm(np.diff(c, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    out = []
    for x, y in np.asarray(xy, dtype=float).reshape(-1, 2):
        a, b = c[:-1], c[1:]
        ab = b - a
        t = np.clip(((np.array([y, x]) - a) * ab).sum(1) / np.maximum((ab * ab).sum(1), 1e-12), 0, 1)
        d = np.linalg.norm(a + t[:, None] * ab - np.array([y, x]), axis=1)
        i = int(np.argmin(d))
        out.append(cum[i] + t[i] * seg[i])
    return np.array(out)


def _stamp(draw: ImageDraw.ImageDraw, xy, text: str, fill=(0, 0, 0), box=(255, 255, 255)):
    x, y = int(xy[0]), int(xy[1])
    l, t, r, b = draw.textbbox((x, y), text)
    draw.rectangle((l - 2, t - 2, r + 2, b + 2), fill=box, outline=fill)
    draw.text((x, y), text, fill=fill)


def region_anchor(mask) -> Tuple[int, int]:
    """Interior pixel (x, y) farthest from the region boundary."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMask("region mask is empty")
    dist = ndimage.distance_transform_edt(np.pad(m, 1))[1:-1, 1:-1]
    r, c = np.unravel_index(int(np.argmax(dist)), dist.shape)
    return int(c), int(r)


def som_overlay(image, regions: Sequence[Tuple[int, np.ndarray]], alpha: float = 0.45) -> np.ndarray:
    """Blend numbered region masks onto ``image`` and print each region id at its anchor."""
    out = np.asarray(image, dtype=float).copy()
    for k, (rid, mask) in enumerate(regions):
        m = np.asarray(mask, dtype=bool)
        out[m] = (1 - alpha) * out[m] + alpha * _REGION_COLORS[k % len(_REGION_COLORS)]
    pil = Image.fromarray(np.clip(np.round(out), 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(pil)
    for rid, mask in regions:
        if np.asarray(mask, dtype=bool).any():
            _stamp(draw, region_anchor(mask), str(rid))
    return np.asarray(pil)


def point_overlay(image, marks: MarkedPoints, radius: int = 3) -> np.ndarray:
    """Draw each contour sample as a dot with its numeric mark."""
    pil = Image.fromarray(np.asarray(image, dtype=np.uint8).copy())
    draw = ImageDraw.Draw(pil)
    for (x, y), mid in zip(marks.xy, marks.ids):
        draw.ellipse((x - radius, y - radius, x + radius, y + radius), fill=(255, 0, 0))
        _stamp(draw, (x + radius + 1, y - radius - 1), str(int(mid)))
    return np.asarray(pil)


@dataclass
class ImaginationComposite:
    image: np.ndarray  # full grid, (H, W, 3) uint8
    tiles: List[np.ndarray]
    hand_object: List[np.ndarray]
    hand_only: List[np.ndarray]
    labels: List[str]
    grid: Tuple[int, int]  # rows, cols
    notes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tiles)


def grid_shape(k: int) -> Tuple[int, int]:
    cols = int(math.ceil(math.sqrt(k)))
    return int(math.ceil(k / cols)), cols


def render_imagination(hand_meshes: Sequence[TriMesh], obj: TriMesh, camera: PinholeCamera,
                       labels: Optional[Sequence[str]] = None, scale: float = 0.5) -> ImaginationComposite:
    """One tile per candidate hand: [hand + object | hand only], labelled and laid out on a grid.

    ``hand_meshes`` are already posed candidate hands (see ``hand.model.hand_mesh``).
    """
    k = len(hand_meshes)
    if not 1 <= k <= MAX_CANDIDATES:
        raise ValueError(f"imagination needs 1..{MAX_CANDIDATES} candidates, got {k}")
    labels = [str(i + 1) for i in range(k)] if labels is None else [str(s) for s in labels]
    if len(labels) != k or len(set(labels)) != k:
        raise ValueError("imagination labels must be unique, one per candidate")
    cam = camera.scaled(scale) if scale != 1.0 else camera
    ho, h, tiles = [], [], []
    for mesh, lab in zip(hand_meshes, labels):
        a = render([obj, mesh], cam, colors=[OBJECT_COLOR, HAND_COLOR]).color
        b = render([mesh], cam, colors=[HAND_COLOR]).color
        tile = np.concatenate([a, np.zeros((cam.height, 2, 3), np.uint8), b], axis=1)
        pil = Image.fromarray(tile)
        _stamp(ImageDraw.Draw(pil), (6, 6), lab)
        ho.append(a)
        h.append(b)
        tiles.append(np.asarray(pil))
    rows, cols = grid_shape(k)
    th, tw = tiles[0].shape[:2]
    canvas = np.full((rows * th, cols * tw, 3), 255, dtype=np.uint8)
    for i, t in enumerate(tiles):
        r, c = divmod(i, cols)
        canvas[r * th:(r + 1) * th, c * tw:(c + 1) * tw] = t
    return ImaginationComposite(canvas, tiles, ho, h, labels, (rows, cols))
