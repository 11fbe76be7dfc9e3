"""Stage prompts, response parsing and the one-retry request loop."""

from __future__ import annotations

import json
import re
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import NoFeasibleRotation, ReasoningParseError
from ..hand.grasp_types import GraspLibrary, GraspType
from .backends import ReasonerBackend, ReasonRequest, backend_label
from .directions import DirectionSet
from .transcript import StageRecord, StageTranscript

RETRY_NOTE = "The previous reply could not be used ({error}). Answer again using exactly the requested format."


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def ask(backend: ReasonerBackend, transcript: StageTranscript, stage: str, prompt: str,
        parse: Callable[[str], Any], images: Sequence[Tuple[str, np.ndarray]] = (),
        context: Optional[Dict[str, Any]] = None, retries: int = 1):
    """Send one request, log it, parse it; re-prompt up to ``retries`` times on parse failure."""
    text, last = prompt, ""
    for attempt in range(retries + 1):
        req = ReasonRequest(stage, text, list(images), dict(context or {}), attempt)
        raw = backend.complete(req)
        rec = transcript.append(StageRecord(stage, text, req.image_refs, raw, None, 0, attempt,
                                            backend_label(backend, stage)))
        try:
            parsed = parse(raw)
        except ReasoningParseError as exc:
            rec.error = last = str(exc)
            text = prompt + "\n\n" + RETRY_NOTE.format(error=last)
            continue
        rec.parsed = _jsonable(parsed)
        return parsed
    raise ReasoningParseError(f"stage '{stage}': no usable reply after {retries + 1} attempts ({last})")


# ---------------------------------------------------------------- parsers


def _int_list(text: str, key: str) -> Optional[List[int]]:
    m = re.search(key + r"\w*\W*\[([^\]]*)\]", text, flags=re.IGNORECASE)
    if m is None:
        return None
    return [int(t) for t in re.findall(r"-?\d+", m.group(1))]


def parse_parts(raw: str, valid_ids: Sequence[int]):
    """-> (hand ids, functional ids, thumb part, index part)."""
    data = None
    try:
        data = json.loads(raw)
    except (json.JSONDecodeError, TypeError):
        pass
    if isinstance(data, dict):
        hand = data.get("hand")
        func = data.get("functional", data.get("func"))
        thumb, index = data.get("thumb_part"), data.get("index_part")
    else:
        hand, func = _int_list(raw, "hand"), _int_list(raw, "func")
        thumb = index = None
    if not hand or not func:
        raise ReasoningParseError("reply must list non-empty 'hand' and 'functional' region ids")
    try:
        hand, func = [int(i) for i in hand], [int(i) for i in func]
    except (TypeError, ValueError):
        raise ReasoningParseError("region ids must be integers") from None
    bad = sorted(set(hand + func) - set(int(i) for i in valid_ids))
    if bad:
        raise ReasoningParseError(f"unknown region ids {bad}")
    func_key = tuple(sorted(set(func)))
    thumb = func_key if thumb is None else (int(thumb),)
    index = func_key if index is None else (int(index),)
    return sorted(set(hand)), sorted(set(func)), list(thumb), list(index)


def parse_points(raw: str, valid_ids: Sequence[int]) -> Tuple[int, int]:
    t = re.search(r"thumb\W*(\d+)", raw, flags=re.IGNORECASE)
    i = re.search(r"index\W*(\d+)", raw, flags=re.IGNORECASE)
    if t is None or i is None:
        raise ReasoningParseError("reply must name a thumb id and an index id")
    thumb, index = int(t.group(1)), int(i.group(1))
    if thumb == index:
        raise ReasoningParseError("thumb and index must pick different points")
    valid = set(int(v) for v in valid_ids)
    if thumb not in valid or index not in valid:
        raise ReasoningParseError(f"point ids must be among 1..{max(valid)}")
    return thumb, index


def parse_label(raw: str, labels: Sequence[str]) -> str:
    """Exact label, else the longest label occurring as a whole word sequence."""
    s = raw.strip().strip("\"'`.").lower()
    if s in labels:
        return s
    found = [lab for lab in labels if re.search(r"(?<![a-z-])" + re.escape(lab) + r"(?![a-z-])", raw.lower())]
    if not found:
        raise ReasoningParseError(f"reply names none of {list(labels)}")
    return max(found, key=len)


# ---------------------------------------------------------------- stages


def select_contact_parts(backend, transcript, image, regions: Sequence[Tuple[int, str]], task: str):
    ids = [rid for rid, _ in regions]
    listing = ", ".join(f"{rid}: {name}" for rid, name in regions)
    prompt = (
        f"Task: {task}\n"
        f"The image shows the object with numbered part regions ({listing}).\n"
        "Choose the regions the whole hand should touch and the regions the thumb and index "
        "finger should touch to carry out the task. Reply as JSON: "
        '{"hand": [ids], "functional": [ids]}. You may add "thumb_part" and "index_part" '
        "when the two fingers belong on different regions."
    )
    ctx = {"task": task, "regions": [{"id": rid, "name": name} for rid, name in regions]}
    return ask(backend, transcript, "contact_parts", prompt, lambda r: parse_parts(r, ids),
               [("som.png", image)] if image is not None else [], ctx)


def select_contact_points(backend, transcript, image, candidates: Sequence[dict], task: str, note: str = ""):
    """``candidates``: dicts with ``id``, ``point`` and ``normals`` (used by offline backends)."""
    ids = [c["id"] for c in candidates]
    prompt = (
        f"Task: {task}\n"
        f"The image shows points numbered 1 to {len(ids)} along the outline of the finger contact "
        "region. Pick one point for the thumb and a different one for the index finger so the two "
        "can squeeze the object. Reply as: thumb: <id>, index: <id>."
    )
    if note:
        prompt += "\n" + note
    return ask(backend, transcript, "contact_points", prompt, lambda r: parse_points(r, ids),
               [("points.png", image)] if image is not None else [], {"candidates": list(candidates)})


def select_direction(backend, transcript, image, directions: DirectionSet, task: str, mean_normal) -> Tuple[str, np.ndarray]:
    labels = list(directions.labels)
    prompt = (
        f"Task: {task}\n"
        "Directions are given relative to the viewer: 'front' points from the object towards the "
        "camera and 'above' points up. From which direction should the hand approach the "
        f"highlighted contact region? Reply with one of: {', '.join(labels)}."
    )
    ctx = {"labels": labels, "vectors": directions.vectors.tolist(),
           "mean_normal": np.asarray(mean_normal, dtype=float).tolist()}
    label = ask(backend, transcript, "direction", prompt, lambda r: parse_label(r, labels),
                [("object.png", image)] if image is not None else [], ctx)
    return label, directions[label]


def select_grasp_type(backend, transcript, library: GraspLibrary, task: str, extent: float) -> GraspType:
    names = library.names
    listing = "\n".join(f"- {t.name}: {t.description}" for t in library)
    prompt = (
        f"Task: {task}\nAvailable grasp types:\n{listing}\n"
        "Which grasp type fits the task best? Reply with its name only."
    )
    name = ask(backend, transcript, "grasp_type", prompt, lambda r: parse_label(r, names),
               context={"names": names, "extent": float(extent)})
    return library[name]


def select_rotation(backend, transcript, image, labels: Sequence[str], scores: Sequence[float], task: str) -> str:
    """Pick one surviving candidate label; a lone survivor is taken without asking."""
    labels = [str(x) for x in labels]
    if not labels:
        raise NoFeasibleRotation("no rotation candidate survived verification")
    if len(labels) == 1:
        return labels[0]
    prompt = (
        f"Task: {task}\n"
        "Each numbered tile shows one candidate hand placement: on the left together with the "
        "object and on the right the hand alone. Which candidate best suits the task? "
        f"Reply with one number from: {', '.join(labels)}."
    )

    def parse(raw):
        for tok in re.findall(r"\d+", raw):
            if tok in labels:
                return tok
        raise ReasoningParseError(f"reply names none of the candidates {labels}")

    return ask(backend, transcript, "rotation", prompt, parse,
               [("imagination.png", image)] if image is not None else [],
               {"labels": labels, "scores": [float(s) for s in scores]})
