import numpy as np
import pytest

from dexgrasp.contact import (
    CONTACT,
    EXCLUSIVE,
    UNLABELED,
    ContactSet,
    LiftConfig,
    PartAnnotation,
    Region,
    expand_point_contact,
    lift_labels,
    lift_mask_to_3d,
    merge_selected_parts,
    should_infer_points,
)
from dexgrasp.errors import EmptyMask, InvalidContactPixel, NoVisibleContact, UnknownRegion
from dexgrasp.geometry import OrientedPointCloud, TriMesh, box, cylinder, icosphere, sample_surface
from dexgrasp.render import PinholeCamera, render


def split_mesh(mesh, axis, names):
    """Two parts separated by the plane through the origin normal to ``axis``."""
    above = (mesh.triangles.mean(axis=1)[:, axis] >= 0).astype(int)
    return TriMesh(mesh.vertices, mesh.faces, mesh.normals, above, names)


def lifted_scene(mesh, n=4096):
    obj = sample_surface(mesh, n, seed=0)
    cam = PinholeCamera.auto_frame(mesh.vertices)
    r = render([mesh], cam)
    return obj, cam, r, PartAnnotation.from_render(r, mesh)


@pytest.fixture(scope="module")
def annotation():
    a = np.zeros((20, 20), bool)
    a[:10] = True
    b = np.zeros((20, 20), bool)
    b[12:, 5:15] = True
    return PartAnnotation([Region(1, a, "handle"), Region(2, b, "head")])


def test_merge_single_and_disjoint(annotation):
    np.testing.assert_array_equal(merge_selected_parts(annotation, [1]), annotation.region(1).mask)
    both = merge_selected_parts(annotation, [1, 2])
    assert both.sum() == annotation.region(1).mask.sum() + annotation.region(2).mask.sum()


def test_merge_errors(annotation):
    with pytest.raises(EmptyMask):
        merge_selected_parts(annotation, [])
    with pytest.raises(UnknownRegion):
        merge_selected_parts(annotation, [7])


def test_annotation_rules_and_round_trip(annotation, tmp_path):
    assert annotation.ids == [1, 2] and annotation.ids_for_names(["head"]) == [2]
    with pytest.raises(ValueError):
        PartAnnotation([Region(1, np.zeros((4, 4)), "a"), Region(1, np.zeros((4, 4)), "b")])
    annotation.save(tmp_path)
    back = PartAnnotation.load(tmp_path)
    assert back.ids == annotation.ids and back.name_of(2) == "head"
    for rid in back.ids:
        np.testing.assert_array_equal(back.region(rid).mask, annotation.region(rid).mask)


def test_flat_plate_lift_equals_mask_projection():
    # every sampled point faces the camera and none projects near the mask edge
    xs = np.arange(-0.0975, 0.1, 0.005)
    gx, gy = np.meshgrid(xs, xs)
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    obj = OrientedPointCloud(pts, np.tile([0, 0, 1.0], (len(pts), 1)))
    cam = PinholeCamera.look_at([0, 0, 1.0], [0, 0, 0], width=320, height=320, fx=600)
    r = render([box((0.3, 0.3, 0.01), center=(0, 0, -0.005))], cam)
    u, _, _ = cam.project(pts)
    mask = np.zeros(r.depth.shape, bool)
    mask[:, :160] = True
    expected = np.flatnonzero(u < 159.5)
    np.testing.assert_array_equal(lift_mask_to_3d(mask, r.depth, cam, obj), expected)


@pytest.mark.parametrize("axis,selected", [(0, 1), (0, 2), (1, 1), (1, 2)])
def test_one_hot_features_recover_parts_on_cylinder(axis, selected):
    mesh = split_mesh(cylinder(0.02, 0.16, 48, axis=axis, segments=2), axis, {0: "handle", 1: "blade"})
    obj, cam, r, ann = lifted_scene(mesh)
    onehot = obj.with_features(np.eye(2)[obj.part_labels])
    labels = lift_labels(merge_selected_parts(ann, [selected]), r.depth, cam, onehot)
    np.testing.assert_array_equal(labels == CONTACT, obj.part_labels == selected - 1)


def test_full_silhouette_sphere_spreads_to_back():
    mesh = icosphere(3, 0.03)
    obj = sample_surface(mesh, 2048, seed=1)
    cam = PinholeCamera.auto_frame(mesh.vertices)
    r = render([mesh], cam)
    labels = lift_labels(r.silhouette, r.depth, cam, obj)
    back = obj.points @ (cam.center / np.linalg.norm(cam.center)) < 0
    assert not np.any(labels == EXCLUSIVE)
    assert np.any(back & (labels == CONTACT))
    # a 3 cm sphere is within reach of the propagation radius everywhere
    assert np.all(labels == CONTACT)


def test_lift_labels_partition_and_determinism():
    mesh = split_mesh(icosphere(3, 0.03), 1, {0: "lower", 1: "upper"})
    obj, cam, r, ann = lifted_scene(mesh, 2048)
    m = merge_selected_parts(ann, [2])
    a = lift_labels(m, r.depth, cam, obj)
    b = lift_labels(m, r.depth, cam, obj)
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {CONTACT, EXCLUSIVE, UNLABELED}
    contact, exclusive = set(np.flatnonzero(a == CONTACT)), set(np.flatnonzero(a == EXCLUSIVE))
    assert not contact & exclusive
    assert len(contact) + len(exclusive) + int(np.sum(a == UNLABELED)) == len(obj)


def test_short_radius_leaves_far_points_unlabeled():
    mesh = cylinder(0.01, 0.3, 32, axis=0)
    obj = sample_surface(mesh, 2048, seed=0)
    cam = PinholeCamera.auto_frame(mesh.vertices)
    r = render([mesh], cam)
    mask = r.silhouette.copy()
    mask[:, int(cam.cx):] = False
    labels = lift_labels(mask, r.depth, cam, obj, LiftConfig(r_near=0.004))
    assert np.any(labels == UNLABELED)


def test_lift_without_visible_contact():
    mesh = icosphere(2, 0.03)
    obj = sample_surface(mesh, 500, seed=0)
    cam = PinholeCamera.auto_frame(mesh.vertices)
    r = render([mesh], cam)
    mask = np.zeros_like(r.silhouette)
    mask[:3, :3] = True
    with pytest.raises(NoVisibleContact):
        lift_labels(mask, r.depth, cam, obj)
    with pytest.raises(ValueError):
        lift_labels(mask[:-1], r.depth, cam, obj)


@pytest.fixture(scope="module")
def dense_sphere():
    mesh = icosphere(4, 0.03)
    obj = sample_surface(mesh, 8192, seed=0)
    cam = PinholeCamera.auto_frame(mesh.vertices)
    r = render([mesh], cam)
    return obj, cam, r


def test_expand_point_contact_radii(dense_sphere):
    obj, cam, r = dense_sphere
    px = (int(cam.cx), int(cam.cy))
    centre = cam.unproject([px[0]], [px[1]], [r.depth[px[1], px[0]]])[0]
    assert len(expand_point_contact(px, r.depth, cam, obj, 0.0)) <= 1
    near = expand_point_contact(px, r.depth, cam, obj, 0.01)
    assert len(near) > 0
    assert np.linalg.norm(obj.points[near] - centre, axis=1).max() <= 0.01
    np.testing.assert_array_equal(expand_point_contact(px, r.depth, cam, obj, 0.1), np.arange(len(obj)))
    sizes = [len(expand_point_contact(px, r.depth, cam, obj, rad)) for rad in np.linspace(0, 0.07, 15)]
    assert np.all(np.diff(sizes) >= 0)


def test_expand_point_contact_background(dense_sphere):
    obj, cam, r = dense_sphere
    with pytest.raises(InvalidContactPixel):
        expand_point_contact((0, 0), r.depth, cam, obj, 0.01)
    with pytest.raises(InvalidContactPixel):
        expand_point_contact((-5, 10**6), r.depth, cam, obj, 0.01)


def test_should_infer_points():
    assert not should_infer_points(3, 3)
    assert should_infer_points(2, 5)
    assert should_infer_points(3, 3, force_flag=True)
    assert not should_infer_points("handle", "handle")


def test_contact_set_validation():
    cs = ContactSet([0, 1], [1], thumb=[2], index=[3])
    assert cs.has_points
    cs.validate(4)
    with pytest.raises(ValueError):
        cs.validate(3)
    with pytest.raises(ValueError):
        ContactSet([0], [0], thumb=[], index=[1]).validate(2)
    assert "thumb" not in ContactSet([0], [0]).to_dict()
