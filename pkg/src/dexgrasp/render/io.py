"""PNG images and binary float sidecars (one JSON header line, then raw little-endian float32)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


def save_png(path, image) -> Path:
    path = Path(path)
    arr = np.asarray(image)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    Image.fromarray(arr.astype(np.uint8)).save(path, format="PNG")
    return path


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB") if im.mode not in ("L", "1") else im.convert("L"))


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def save_float_blob(path, array: np.ndarray, header: dict) -> Path:
    path = Path(path)
    head = dict(header, dtype="<f4", shape=list(array.shape))
    with open(path, "wb") as fh:
        fh.write(json.dumps(head, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return path


def load_float_blob(path):
    with open(path, "rb") as fh:
        head = json.loads(fh.readline().decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f4")
    return data.reshape(head["shape"]).astype(np.float32), head


def save_depth(path, depth) -> Path:
    d = np.asarray(depth, dtype=np.float32)
    return save_float_blob(path, d, {"width": int(d.shape[1]), "height": int(d.shape[0])})


def load_depth(path) -> np.ndarray:
    d, head = load_float_blob(path)
    return d.reshape(head["height"], head["width"])
