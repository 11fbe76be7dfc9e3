import json

import numpy as np
import pytest

from dexgrasp.errors import BackendError, ConfigError, DegenerateFrame, NoFeasibleRotation, ReasoningParseError
from dexgrasp.geometry import box, convex_hull, expand_hull
from dexgrasp.hand import default_hand, default_library, palm_and_finger_directions
from dexgrasp.reasoner import (
    API_KEY_ENV,
    CARDINALS,
    DIAGONALS,
    OPPOSITE,
    FixtureBackend,
    HeuristicBackend,
    HttpBackend,
    ReasonRequest,
    StageRouter,
    StageTranscript,
    align_rotation,
    ask,
    build_direction_set,
    generate_rotation_candidates,
    initial_position,
    make_backend,
    parse_label,
    parse_parts,
    parse_points,
    select_direction,
    select_grasp_type,
    select_rotation,
)


@pytest.fixture(scope="module")
def frame():
    return build_direction_set([0, 0, 1.0], [0, 0, 0])


def test_worked_camera_frame(frame):
    np.testing.assert_array_equal(frame["front"], [0, 0, 1.0])
    np.testing.assert_array_equal(frame["above"], [0, 1.0, 0])
    np.testing.assert_array_equal(frame["right"], [-1.0, 0, 0])


def test_eighteen_unit_directions():
    rng = np.random.default_rng(0)
    for _ in range(20):
        ds = build_direction_set(rng.normal(size=3), rng.normal(size=3) * 0.1)
        assert len(ds) == 18 and len(set(ds.labels)) == 18
        np.testing.assert_allclose(np.linalg.norm(ds.vectors, axis=1), 1.0, atol=1e-9)
        for a, b in OPPOSITE.items():
            np.testing.assert_allclose(ds[a], -ds[b], atol=1e-12)
        for a, b in DIAGONALS:
            s = ds[a] + ds[b]
            np.testing.assert_allclose(ds[f"{a}-{b}"], s / np.linalg.norm(s), atol=1e-12)
        assert ds.parents("front-left") == ("front", "left")
    assert set(CARDINALS) <= set(ds.labels)


def test_vertical_view_frame():
    ds = build_direction_set([0, 1.0, 0], [0, 0, 0])
    assert ds.degenerate
    assert abs(ds["front"] @ ds["above"]) <= 1e-12
    with pytest.raises(DegenerateFrame):
        build_direction_set([0, 1.0, 0], [0, 0, 0], strict=True)
    with pytest.raises(DegenerateFrame):
        build_direction_set([0, 0, 0], [0, 0, 0])
    with pytest.raises(KeyError):
        ds["sideways"]


def test_initial_position_on_expanded_cube():
    hull = expand_hull(convex_hull(box((0.1, 0.1, 0.1)).vertices), 0.02)
    np.testing.assert_allclose(initial_position([0, 0, 0], [0, 0, 2.0], hull), [0, 0, 0.07], atol=1e-12)
    np.testing.assert_allclose(initial_position([0, 0, 0], [1, 1, 0], hull), [0.07, 0.07, 0], atol=1e-12)


def test_align_rotation():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        np.testing.assert_allclose(align_rotation(a, b, [0, 1, 0]).apply(a), b, atol=1e-12)
    flip = align_rotation([0, 0, 1.0], [0, 0, -1.0], [0, 1.0, 0])
    np.testing.assert_allclose(flip.apply([0, 0, 1.0]), [0, 0, -1.0], atol=1e-12)
    assert align_rotation([1.0, 0, 0], [2.0, 0, 0], [0, 1, 0]).magnitude() == 0.0


def test_rotation_candidates_share_palm_and_spin():
    kin = default_hand()
    d = np.array([0.3, -0.2, 0.9])
    d /= np.linalg.norm(d)
    cands = generate_rotation_candidates(kin, np.zeros(16), [0, 0, 0.1], d, k=4)
    fingers = []
    for pose in cands:
        palm, finger = palm_and_finger_directions(kin, pose)
        np.testing.assert_allclose(palm, d, atol=1e-12)
        fingers.append(finger)
    for j in range(4):
        cos = fingers[0] @ fingers[j]
        assert cos == pytest.approx(np.cos(2 * np.pi * j / 4), abs=1e-12)
    with pytest.raises(ValueError):
        generate_rotation_candidates(kin, np.zeros(16), [0, 0, 0], d, k=0)


def test_parse_parts():
    hand, func, thumb, index = parse_parts('{"hand": [2, 1], "functional": [3]}', [1, 2, 3])
    assert (hand, func, thumb, index) == ([1, 2], [3], [3], [3])
    out = parse_parts('{"hand": [1], "functional": [1, 2], "thumb_part": 1, "index_part": 2}', [1, 2])
    assert out[2:] == ([1], [2])
    assert parse_parts("Hand: [1, 2]\nFunc: [2]", [1, 2])[:2] == ([1, 2], [2])
    for bad in ('{"hand": [], "functional": [1]}', '{"hand": [9], "functional": [1]}', "no idea"):
        with pytest.raises(ReasoningParseError):
            parse_parts(bad, [1, 2])


def test_parse_points_and_labels():
    assert parse_points("Thumb: 3, index: 11", range(1, 21)) == (3, 11)
    for bad in ("thumb 4 index 4", "thumb 1", "thumb: 30, index: 2"):
        with pytest.raises(ReasoningParseError):
            parse_points(bad, range(1, 21))
    labels = ["front", "front-left", "left"]
    assert parse_label("Front-left.", labels) == "front-left"
    assert parse_label("I would approach from the front-left side", labels) == "front-left"
    assert parse_label("from the left", labels) == "left"
    with pytest.raises(ReasoningParseError):
        parse_label("diagonally", labels)


def test_ask_reprompts_once_then_fails():
    backend = FixtureBackend({"direction": ["sideways", "front"]})
    t = StageTranscript()
    label = ask(backend, t, "direction", "which way?", lambda r: parse_label(r, ["front"]))
    assert label == "front"
    assert [r.retry for r in t.records] == [0, 1]
    assert t.records[0].error and t.records[1].parsed == "front"
    assert "previous reply" in t.records[1].prompt
    with pytest.raises(ReasoningParseError):
        ask(FixtureBackend({"direction": ["x", "y"]}), StageTranscript(), "direction", "?",
            lambda r: parse_label(r, ["front"]))


def test_fixture_backend_exhaustion_and_file(tmp_path):
    b = FixtureBackend({"grasp_type": "power"})
    assert b.complete(ReasonRequest("grasp_type", "")) == "power"
    with pytest.raises(BackendError):
        b.complete(ReasonRequest("grasp_type", ""))
    with pytest.raises(BackendError):
        b.complete(ReasonRequest("rotation", ""))
    path = tmp_path / "r.json"
    path.write_text(json.dumps({"rotation": ["2", "3"]}))
    fb = make_backend("fixture", {"fixture_path": str(path)})
    assert [fb.complete(ReasonRequest("rotation", "")) for _ in range(2)] == ["2", "3"]
    with pytest.raises(ConfigError):
        make_backend("fixture", {})
    with pytest.raises(ConfigError):
        make_backend("oracle")


def test_transcript_round_trip_replays(tmp_path):
    t = StageTranscript(meta={"task": "x"})
    lib = default_library()
    select_grasp_type(HeuristicBackend(), t, lib, "pick", 0.1)
    select_direction(HeuristicBackend(), t, None, build_direction_set([0, 0, 1.0], [0, 0, 0]), "pick", [0, 1.0, 0])
    t.save(tmp_path / "t.json")
    back = StageTranscript.load(tmp_path / "t.json")
    assert back.to_dict() == t.to_dict()
    assert [r.timestamp for r in back.records] == [0, 1]
    replay = FixtureBackend.from_file(tmp_path / "t.json")
    t2 = StageTranscript()
    assert select_grasp_type(replay, t2, lib, "pick", 0.1).name == "power"
    assert t2.records[0].response == t.records[0].response


def test_heuristic_rules(frame):
    h = HeuristicBackend()
    regions = [{"id": 1, "name": "head"}, {"id": 2, "name": "handle"}]
    assert json.loads(h.complete(ReasonRequest("contact_parts", "", context={"task": "hammer", "regions": regions}))) \
        == {"hand": [2], "functional": [2]}
    ctx = {"labels": list(frame.labels), "vectors": frame.vectors.tolist()}
    assert h.complete(ReasonRequest("direction", "", context={**ctx, "mean_normal": [0, 0.9, 0.1]})) == "above"
    assert h.complete(ReasonRequest("direction", "", context={**ctx, "mean_normal": [0.01, 0, 0]})) == "front"
    names = default_library().names
    assert h.complete(ReasonRequest("grasp_type", "", context={"names": names, "extent": 0.1})) == "power"
    assert h.complete(ReasonRequest("grasp_type", "", context={"names": names, "extent": 0.02})) == "precision-pinch"
    assert h.complete(ReasonRequest("rotation", "", context={"labels": ["1", "3"], "scores": [0.2, 0.1]})) == "3"
    # opposite-face points win over a same-face pair
    cands = [{"id": 1, "point": [0, 0, 0.01], "normals": [[0, 0, 1.0]]},
             {"id": 2, "point": [0.01, 0, 0.01], "normals": [[0, 0, 1.0]]},
             {"id": 3, "point": [0, 0, -0.01], "normals": [[0, 0, -1.0]]}]
    assert h.complete(ReasonRequest("contact_points", "", context={"candidates": cands})) == "thumb: 1, index: 3"
    with pytest.raises(BackendError):
        h.complete(ReasonRequest("mystery", ""))


def test_select_rotation_single_and_empty():
    t = StageTranscript()
    assert select_rotation(HeuristicBackend(), t, None, ["3"], [0.0], "x") == "3"
    assert len(t) == 0
    with pytest.raises(NoFeasibleRotation):
        select_rotation(HeuristicBackend(), t, None, [], [], "x")


def test_stage_router():
    r = StageRouter(HeuristicBackend(), {"rotation": FixtureBackend({"rotation": "9"})})
    assert r.complete(ReasonRequest("rotation", "")) == "9"
    assert r.backend_for("direction").name == "heuristic"
    with pytest.raises(ConfigError):
        StageRouter(HeuristicBackend(), {"dance": HeuristicBackend()})


class FakeResponse:
    def __init__(self, body, status=200):
        self.body, self.status = body, status

    def raise_for_status(self):
        import requests
        if self.status >= 400:
            raise requests.HTTPError(f"status {self.status}")

    def json(self):
        return self.body


class FakeSession:
    def __init__(self, response):
        self.response = response
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        return self.response


def test_http_backend_payload_and_reply(monkeypatch):
    session = FakeSession(FakeResponse({"choices": [{"message": {"content": "front"}}]}))
    b = HttpBackend("http://example.invalid/v1/chat", "some-model", timeout=5, session=session)
    req = ReasonRequest("direction", "which way?", [("object.png", np.zeros((4, 4, 3), np.uint8))])
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(BackendError):
        b.complete(req)
    monkeypatch.setenv(API_KEY_ENV, "secret")
    assert b.complete(req) == "front"
    call = session.calls[-1]
    assert call["headers"]["Authorization"] == "Bearer secret" and call["timeout"] == 5
    content = call["json"]["messages"][0]["content"]
    assert content[0] == {"type": "text", "text": "which way?"}
    assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")


def test_http_backend_errors(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "secret")
    for resp in (FakeResponse({}, 500), FakeResponse({"choices": []}),
                 FakeResponse({"choices": [{"message": {"content": "  "}}]})):
        with pytest.raises(BackendError):
            HttpBackend("http://x", "m", session=FakeSession(resp)).complete(ReasonRequest("rotation", "?"))
    parts = FakeResponse({"choices": [{"message": {"content": [{"type": "text", "text": "2"}]}}]})
    assert HttpBackend("http://x", "m", session=FakeSession(parts)).complete(ReasonRequest("rotation", "?")) == "2"
    with pytest.raises(ConfigError):
        HttpBackend("", "m")

