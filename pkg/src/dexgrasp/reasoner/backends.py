"""Reasoning backends: transcript replay, offline geometric rules and an HTTP chat endpoint."""

from __future__ import annotations

import base64
import io
import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import requests
from PIL import Image

from ..errors import BackendError, ConfigError
from ..verification import point_pair_score

STAGES = ("contact_parts", "contact_points", "direction", "grasp_type", "rotation")
API_KEY_ENV = "DEXGRASP_API_KEY"

# part names that usually denote the place a hand goes
GRASP_NOUNS = ("handle", "grip", "body", "shaft", "stem", "neck", "rod", "bar", "knob", "rim", "strap", "bail")
POWER_EXTENT = 0.06  # m, functional-region size above which the whole hand wraps
MIN_MEAN_NORMAL = 0.1  # below this the region is closed/symmetric and the camera side is used


@dataclass
class ReasonRequest:
    stage: str
    prompt: str
    images: List[Tuple[str, np.ndarray]] = field(default_factory=list)
    context: Dict[str, Any] = field(default_factory=dict)  # structured facts for offline backends
    attempt: int = 0

    @property
    def image_refs(self) -> List[str]:
        return [name for name, _ in self.images]


class ReasonerBackend:
    name = "base"
    supports_images = False

    def complete(self, request: ReasonRequest) -> str:
        raise NotImplementedError


class FixtureBackend(ReasonerBackend):
    """Replays scripted responses keyed by stage, consumed in request order."""

    name = "fixture"

    def __init__(self, responses: Mapping[str, Any]):
        self._script: Dict[str, List[str]] = {}
        for stage, value in responses.items():
            self._script[stage] = [value] if isinstance(value, str) else [str(v) for v in value]
        self._cursor: Dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "FixtureBackend":
        """Accepts a plain ``{stage: response | [responses]}`` file or a saved transcript."""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read fixture responses {path}: {exc}") from exc
        if isinstance(data, dict) and "records" in data:
            script: Dict[str, List[str]] = {}
            for r in data["records"]:
                script.setdefault(r["stage"], []).append(r["response"])
            return cls(script)
        if not isinstance(data, dict):
            raise ConfigError("fixture responses must be a JSON object keyed by stage")
        return cls(data)

    def complete(self, request: ReasonRequest) -> str:
        with self._lock:
            seq = self._script.get(request.stage)
            i = self._cursor.get(request.stage, 0)
            if seq is None or i >= len(seq):
                raise BackendError(f"fixture has no response #{i + 1} for stage '{request.stage}'")
            self._cursor[request.stage] = i + 1
            return seq[i]


def _words(text: str) -> List[str]:
    return re.findall(r"[a-z]+", text.lower())


class HeuristicBackend(ReasonerBackend):
    """Deterministic geometric rules over the structured request context."""

    name = "heuristic"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def complete(self, request: ReasonRequest) -> str:
        handler = getattr(self, "_" + request.stage, None)
        if handler is None:
            raise BackendError(f"heuristic backend cannot answer stage '{request.stage}'")
        return handler(request.context)

    @staticmethod
    def _contact_parts(ctx) -> str:
        regions = ctx["regions"]
        task = set(_words(ctx.get("task", "")))
        named = [r["id"] for r in regions if task & set(_words(r["name"]))]
        nouns = [r["id"] for r in regions if set(GRASP_NOUNS) & set(_words(r["name"]))]
        ids = named or nouns or [r["id"] for r in regions]
        return json.dumps({"hand": ids, "functional": ids})

    @staticmethod
    def _contact_points(ctx) -> str:
        cands = ctx["candidates"]
        best, best_key = None, None
        for a in cands:
            for b in cands:
                if a["id"] == b["id"]:
                    continue
                pa, pb = np.asarray(a["point"]), np.asarray(b["point"])
                if np.linalg.norm(pa - pb) < 1e-6:
                    continue
                score = point_pair_score(pa, pb, np.asarray(a["normals"]), np.asarray(b["normals"]))
                key = (round(score, 9), round(float(np.linalg.norm(pa - pb)), 9), -a["id"], -b["id"])
                if best_key is None or key > best_key:
                    best, best_key = (a["id"], b["id"]), key
        if best is None:
            a, b = cands[0]["id"], cands[-1]["id"]
            best = (a, b)
        return f"thumb: {best[0]}, index: {best[1]}"

    @staticmethod
    def _direction(ctx) -> str:
        labels, vecs = ctx["labels"], np.asarray(ctx["vectors"], dtype=float)
        n = np.asarray(ctx.get("mean_normal", (0.0, 0.0, 0.0)), dtype=float)
        if np.linalg.norm(n) < MIN_MEAN_NORMAL:
            return "front"
        return labels[int(np.argmax(vecs @ n))]

    @staticmethod
    def _grasp_type(ctx) -> str:
        names = ctx["names"]
        want = "power" if float(ctx["extent"]) > POWER_EXTENT else "precision-pinch"
        return want if want in names else names[0]

    @staticmethod
    def _rotation(ctx) -> str:
        labels, scores = ctx["labels"], ctx["scores"]
        return str(labels[int(np.argmin(scores))])


def png_data_uri(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


class HttpBackend(ReasonerBackend):
    """Chat-completions style endpoint; bearer token read from ``DEXGRASP_API_KEY``."""

    name = "http"
    supports_images = True

    def __init__(self, url: str, model: str, timeout: float = 120.0, max_in_flight: int = 4,
                 session: Optional[requests.Session] = None):
        if not url:
            raise ConfigError("http backend needs a URL")
        self.url, self.model, self.timeout = url, model, timeout
        self._slots = threading.BoundedSemaphore(max(1, int(max_in_flight)))
        self._session = session or requests.Session()

    def payload(self, request: ReasonRequest) -> dict:
        content: List[dict] = [{"type": "text", "text": request.prompt}]
        for _, img in request.images:
            content.append({"type": "image_url", "image_url": {"url": png_data_uri(img)}})
        return {"model": self.model, "messages": [{"role": "user", "content": content}]}

    def complete(self, request: ReasonRequest) -> str:
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise BackendError(f"environment variable {API_KEY_ENV} is not set")
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        with self._slots:
            try:
                resp = self._session.post(self.url, json=self.payload(request), headers=headers,
                                          timeout=self.timeout)
                resp.raise_for_status()
                body = resp.json()
            except (requests.RequestException, ValueError) as exc:
                raise BackendError(f"request to {self.url} failed: {exc}") from exc
        try:
            msg = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError("response has no first choice message") from exc
        if isinstance(msg, list):
            texts = [p.get("text", "") for p in msg if isinstance(p, dict) and p.get("type") == "text"]
            msg = "\n".join(texts)
        if not isinstance(msg, str) or not msg.strip():
            raise BackendError("response text is empty")
        return msg


class StageRouter(ReasonerBackend):
    """Sends each stage to its configured backend, falling back to ``default``."""

    name = "router"

    def __init__(self, default: ReasonerBackend, per_stage: Optional[Mapping[str, ReasonerBackend]] = None):
        self.default = default
        self.per_stage = dict(per_stage or {})
        unknown = set(self.per_stage) - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown stages in backend routing: {sorted(unknown)}")

    def backend_for(self, stage: str) -> ReasonerBackend:
        return self.per_stage.get(stage, self.default)

    @property
    def supports_images(self):  # type: ignore[override]
        return any(b.supports_images for b in [self.default, *self.per_stage.values()])

    def complete(self, request: ReasonRequest) -> str:
        return self.backend_for(request.stage).complete(request)


def backend_label(backend: ReasonerBackend, stage: str) -> str:
    if isinstance(backend, StageRouter):
        return backend.backend_for(stage).name
    return backend.name


def make_backend(kind: str, settings: Optional[Mapping[str, Any]] = None, seed: int = 0) -> ReasonerBackend:
    settings = dict(settings or {})
    if kind == "heuristic":
        return HeuristicBackend(seed)
    if kind == "fixture":
        path = settings.get("fixture_path")
        if not path:
            raise ConfigError("fixture backend needs 'fixture_path'")
        return FixtureBackend.from_file(path)
    if kind == "http":
        return HttpBackend(settings.get("url", ""), settings.get("model", ""),
                           float(settings.get("timeout", 120.0)), int(settings.get("max_in_flight", 4)))
    raise ConfigError(f"unknown backend '{kind}'")


__all__ = [
    "API_KEY_ENV", "FixtureBackend", "GRASP_NOUNS", "HeuristicBackend", "HttpBackend", "ReasonRequest",
    "ReasonerBackend", "STAGES", "StageRouter", "backend_label", "make_backend", "png_data_uri",
]
