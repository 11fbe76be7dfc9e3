import numpy as np
import pytest

from dexgrasp.errors import EmptyMask, InvalidCamera
from dexgrasp.geometry import box, icosphere
from dexgrasp.hand import GraspPose, default_hand, hand_mesh
from dexgrasp.render import (
    PinholeCamera,
    back_project,
    contour_arc_positions,
    grid_shape,
    load_depth,
    load_png,
    render,
    render_imagination,
    sample_mask_contour,
    save_depth,
    save_png,
    som_overlay,
)


def front_camera(dist=1.2, w=640, h=480, f=600.0):
    return PinholeCamera.look_at([0, 0, dist], [0, 0, 0], width=w, height=h, fx=f)


def test_camera_validation():
    with pytest.raises(InvalidCamera):
        PinholeCamera(600, 600, 0, 0, 0, 480, np.eye(3), np.zeros(3))
    with pytest.raises(InvalidCamera):
        PinholeCamera(-1, 600, 0, 0, 640, 480, np.eye(3), np.zeros(3))
    with pytest.raises(InvalidCamera):
        PinholeCamera(600, 600, 0, 0, 640, 480, np.diag([1, 1, 2.0]), np.zeros(3))


def test_camera_dict_round_trip():
    cam = PinholeCamera.auto_frame(icosphere(2).vertices)
    back = PinholeCamera.from_dict(cam.to_dict())
    np.testing.assert_array_equal(back.rotation, cam.rotation)
    np.testing.assert_array_equal(back.translation, cam.translation)
    with pytest.raises(InvalidCamera):
        PinholeCamera.from_dict({"fx": 1})


def test_project_unproject_round_trip():
    cam = PinholeCamera.auto_frame(icosphere(2).vertices)
    pts = icosphere(2).vertices
    u, v, z = cam.project(pts)
    np.testing.assert_allclose(cam.unproject(u, v, z), pts, atol=1e-12)
    np.testing.assert_allclose(cam.project(cam.center[None] + 0.0 * pts[:1])[2], 0.0, atol=1e-12)


def test_cube_silhouette_matches_projection():
    cam = front_camera()
    r = render([box((0.4, 0.4, 0.4))], cam)
    # visible front face at z = 0.2: a square of side f * 0.4 / 1.0 pixels
    side = 600 * 0.4 / 1.0
    assert r.silhouette.sum() == pytest.approx(side ** 2, rel=0.02)
    np.testing.assert_allclose(r.depth[r.silhouette], 1.0, atol=1e-5)


def test_empty_scene_has_zero_depth():
    r = render([], front_camera())
    assert np.all(r.depth == 0)
    assert np.all(r.mesh_index == -1)


def test_near_cube_wins_depth():
    cam = front_camera()
    far = box((0.4, 0.4, 0.4), center=(0, 0, -0.5))
    near = box((0.2, 0.2, 0.2), center=(0, 0, 0.3))
    r = render([far, near], cam)
    centre = r.mesh_index[240, 320]
    assert centre == 1
    assert r.depth[240, 320] == pytest.approx(1.2 - 0.4, abs=1e-5)


def test_render_is_deterministic():
    cam = PinholeCamera.auto_frame(icosphere(3).vertices)
    a, b = render([icosphere(3)], cam), render([icosphere(3)], cam)
    np.testing.assert_array_equal(a.color, b.color)
    np.testing.assert_array_equal(a.depth, b.depth)


def test_back_project_cube_face_is_planar():
    cam = front_camera()
    r = render([box((0.4, 0.4, 0.4))], cam)
    cloud = back_project(r.silhouette, r.depth, cam)
    assert len(cloud) == r.silhouette.sum()
    residual = np.abs(cloud.points[:, 2] - 0.2)
    assert residual.max() <= 1e-6
    assert np.all(cloud.normals @ (cam.center - cloud.points).T.mean(axis=1) > 0)
    empty = back_project(np.zeros_like(r.silhouette), r.depth, cam)
    assert len(empty) == 0


def test_back_project_round_trip_within_half_pixel():
    mesh = icosphere(3, radius=0.1)
    cam = PinholeCamera.auto_frame(mesh.vertices)
    r = render([mesh], cam)
    cloud = back_project(r.silhouette, r.depth, cam)
    u, v, z = cam.project(cloud.points)
    rows, cols = np.nonzero(r.silhouette & (r.depth > 0))
    np.testing.assert_allclose(u, cols, atol=1e-6)
    np.testing.assert_allclose(v, rows, atol=1e-6)
    # distance to the true sphere is bounded by half a pixel footprint plus the facet sagitta
    tri = mesh.triangles
    edge = np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1).max()
    sagitta = 0.1 - np.sqrt(0.1 ** 2 - (edge / np.sqrt(3)) ** 2)
    d = np.abs(np.linalg.norm(cloud.points, axis=1) - 0.1)
    assert np.all(d <= 0.5 * z / cam.fx + sagitta)


def test_square_contour_spacing():
    mask = np.zeros((160, 160), bool)
    mask[30:130, 30:130] = True
    marks = sample_mask_contour(mask, 4)
    assert list(marks.ids) == [1, 2, 3, 4]
    s = contour_arc_positions(mask, marks.xy)
    perimeter = 400.0
    gaps = np.diff(np.concatenate([s, [s[0] + perimeter]]))
    np.testing.assert_allclose(gaps, perimeter / 4, atol=1.5)
    two = sample_mask_contour(mask, 2)
    np.testing.assert_allclose(np.abs(np.diff(contour_arc_positions(mask, two.xy))), perimeter / 2, atol=1.5)


def test_circle_contour_angles():
    yy, xx = np.mgrid[:120, :120]
    mask = (xx - 60) ** 2 + (yy - 60) ** 2 <= 40 ** 2
    marks = sample_mask_contour(mask, 16)
    ang = np.degrees(np.arctan2(marks.xy[:, 1] - 60, marks.xy[:, 0] - 60))
    gaps = np.abs((np.diff(np.concatenate([ang, ang[:1]])) + 180) % 360 - 180)
    np.testing.assert_allclose(gaps, 22.5, atol=2.0)


def test_contour_errors():
    with pytest.raises(EmptyMask):
        sample_mask_contour(np.zeros((10, 10), bool), 4)
    with pytest.raises(ValueError):
        sample_mask_contour(np.ones((10, 10), bool), 1)


def test_imagination_grid_and_labels():
    kin = default_hand()
    obj = icosphere(2, radius=0.04)
    cam = PinholeCamera.auto_frame(obj.vertices, fill=0.3)
    hands = [hand_mesh(kin, GraspPose([0, 0, 0.1 + 0.01 * i], [0, 0, 0, 1], np.zeros(16))) for i in range(4)]
    comp = render_imagination(hands, obj, cam)
    assert comp.grid == (2, 2) and comp.labels == ["1", "2", "3", "4"]
    th, tw = comp.tiles[0].shape[:2]
    assert comp.image.shape[:2] == (2 * th, 2 * tw)
    single = render_imagination(hands[:1], obj, cam)
    assert single.grid == (1, 1) and len(single) == 1
    with pytest.raises(ValueError):
        render_imagination(hands, obj, cam, labels=["1", "1", "2", "3"])
    assert grid_shape(12) == (3, 4)


def test_hidden_hand_still_visible_in_hand_only_tile():
    kin = default_hand()
    obj = box((0.6, 0.6, 0.02), center=(0, 0, 0.05))
    cam = front_camera(dist=1.0)
    hidden = hand_mesh(kin, GraspPose([0, 0, -0.1], [0, 0, 0, 1], np.zeros(16)))
    comp = render_imagination([hidden], obj, cam, scale=0.5)
    white = np.all(comp.hand_object[0] == 255, axis=2)
    hand_px = ~np.all(comp.hand_only[0] == 255, axis=2)
    assert hand_px.sum() > 0
    # every hand pixel is covered by the plate in the fused view
    assert not np.any(white & hand_px)


def test_som_overlay_and_png_io(tmp_path):
    img = np.full((40, 40, 3), 255, np.uint8)
    m = np.zeros((40, 40), bool)
    m[5:20, 5:20] = True
    out = som_overlay(img, [(1, m)])
    assert out.shape == img.shape and np.any(out != 255)
    save_png(tmp_path / "a.png", out)
    np.testing.assert_array_equal(load_png(tmp_path / "a.png"), out)


def test_depth_sidecar_round_trip(tmp_path):
    depth = np.random.default_rng(0).random((12, 7)).astype(np.float32)
    save_depth(tmp_path / "d.depth", depth)
    np.testing.assert_array_equal(load_depth(tmp_path / "d.depth"), depth)
