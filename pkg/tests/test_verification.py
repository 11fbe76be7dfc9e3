import numpy as np
import pytest

from dexgrasp.errors import ConfigError, DegenerateForceAxis, EmptyCloud
from dexgrasp.fixtures import get_fixture
from dexgrasp.geometry import OrientedPointCloud, box, cylinder, icosphere, sample_surface
from dexgrasp.hand import default_hand, default_library, palm_and_finger_directions
from dexgrasp.reasoner.directions import generate_rotation_candidates, optimal_palm_direction
from dexgrasp.verification import (
    VerificationConfig,
    filter_rotation_candidates,
    finger_alignment,
    local_normals,
    nearest_contact_surface_point,
    point_pair_score,
    validate_point_contacts,
)


@pytest.fixture(scope="module")
def kin():
    return default_hand()


@pytest.fixture(scope="module")
def hammer_cloud():
    return sample_surface(get_fixture("hammer").mesh, 4096, seed=0)


@pytest.fixture(scope="module")
def slab():
    return sample_surface(box((0.1, 0.1, 0.02)), 8192, seed=0)


def test_config_bounds():
    VerificationConfig()
    for bad in ({"tau_n": 1.0}, {"tau_m": 0.0}, {"radius": -1.0}, {"max_neighbors": 0}):
        with pytest.raises(ConfigError):
            VerificationConfig(**bad)


def test_sphere_surface_point_along_direction():
    obj = sample_surface(icosphere(4, 0.05), 8192, seed=0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        p, normals = nearest_contact_surface_point(np.zeros(3), d, obj)
        assert np.linalg.norm(p / 0.05 - d) <= 0.05
        assert normals.mean(axis=0) @ d >= 0.95


def test_ray_missing_thin_handle_falls_back_to_nearest():
    handle = sample_surface(cylinder(0.002, 0.2, 24, axis=0), 2048, seed=0)
    # passes 1 mm beside the handle surface
    p, _ = nearest_contact_surface_point([0.0, 0.003, 0.05], [0, 0, -1.0], handle)
    assert abs(p[0]) <= 0.003 and p[1] > 0


def test_zero_radius_gives_single_normal(hammer_cloud):
    idx, normals = local_normals(hammer_cloud, hammer_cloud.points[5], 0.0, 64)
    assert list(idx) == [5] and normals.shape == (1, 3)
    with pytest.raises(EmptyCloud):
        nearest_contact_surface_point(np.zeros(3), [0, 0, 1.0], OrientedPointCloud(np.zeros((0, 3)), np.zeros((0, 3))))


def test_local_normals_cap_spans_radius(hammer_cloud):
    p = np.array([0.0, 0.0, 0.012])
    idx, _ = local_normals(hammer_cloud, p, 0.015, 64)
    assert len(idx) == 64 and len(set(idx)) == 64
    d = np.linalg.norm(hammer_cloud.points[idx] - p, axis=1)
    assert d.max() >= 0.01 and d.max() <= 0.015


def test_alignment_trivial_cases(kin):
    assert finger_alignment([0, 0, 1], [[1, 0, 0]] * 3) == 0.0
    assert finger_alignment([0, 0, 1], [[1, 0, 0], [0, 0, -1]]) == 1.0


def hammer_candidates(kin, cloud, k):
    d = np.array([0, 0, 1.0])
    p, normals = nearest_contact_surface_point(np.zeros(3), d, cloud)
    theta = default_library()["power"].theta
    cands = generate_rotation_candidates(kin, theta, p + 0.05 * d, optimal_palm_direction(d), k)
    return cands, normals


def test_handle_axis_rotations_filtered(kin, hammer_cloud):
    cands, normals = hammer_candidates(kin, hammer_cloud, 8)
    keep = filter_rotation_candidates(kin, cands, normals, 0.85)
    handle_axis = np.array([1.0, 0, 0])
    for i, pose in enumerate(cands):
        _, f = palm_and_finger_directions(kin, pose)
        along = abs(f @ handle_axis)
        if along > 0.99:
            assert i not in keep
        if along < 0.01:
            assert i in keep
    assert 0 < len(keep) < len(cands)


def test_filter_monotone_in_tau(kin, hammer_cloud):
    cands, normals = hammer_candidates(kin, hammer_cloud, 12)
    prev = None
    for tau in np.linspace(0.05, 0.95, 10):
        keep = set(filter_rotation_candidates(kin, cands, normals, tau))
        if prev is not None:
            assert keep <= prev
        prev = keep


def test_same_face_pair_invalid_and_opposite_valid(slab):
    cfg = VerificationConfig()

    def normals_at(p):
        return local_normals(slab, p, cfg.radius, cfg.max_neighbors)[1]

    a, b = np.array([-0.02, 0, 0.01]), np.array([0.02, 0, 0.01])
    assert not validate_point_contacts(a, b, normals_at(a), normals_at(b), 0.7)
    top, bottom = np.array([0, 0, 0.01]), np.array([0, 0, -0.01])
    assert validate_point_contacts(top, bottom, normals_at(top), normals_at(bottom), 0.7)
    # swapping the fingers keeps the verdict
    assert validate_point_contacts(bottom, top, normals_at(bottom), normals_at(top), 0.7)
    assert not validate_point_contacts(b, a, normals_at(b), normals_at(a), 0.7)


def test_antipodal_sphere_pair_valid():
    n = [[0, 0, 1.0]]
    assert validate_point_contacts([0, 0, 1.0], [0, 0, -1.0], n, [[0, 0, -1.0]], 0.7)


def test_force_test_is_signed():
    # inward-facing normals align under |cos| but fail the signed test
    inward_top, inward_bottom = [[0, 0, -1.0]], [[0, 0, 1.0]]
    assert not validate_point_contacts([0, 0, 1.0], [0, 0, -1.0], inward_top, inward_bottom, 0.7)
    assert finger_alignment([0, 0, 1.0], inward_top) == 1.0


def test_raising_tau_m_never_validates():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=3), rng.normal(size=3)
        na, nb = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
        prev = True
        for tau in (0.1, 0.4, 0.7, 0.9):
            ok = validate_point_contacts(a, b, na, nb, tau)
            assert prev or not ok
            prev = ok
        assert validate_point_contacts(a, b, na, nb, 0.5) == (point_pair_score(a, b, na, nb) >= 0.5)


def test_coincident_points_raise():
    with pytest.raises(DegenerateForceAxis):
        validate_point_contacts([0, 0, 0], [0, 0, 0], [[0, 0, 1.0]], [[0, 0, 1.0]])
