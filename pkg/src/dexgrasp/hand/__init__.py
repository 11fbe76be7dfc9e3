"""Capsule hand model, kinematics and grasp-type library."""

from .grasp_types import GraspLibrary, GraspType, default_library
from .kinematics import (
    FINGERS,
    FUNCTIONAL_FINGERS,
    N_JOINTS,
    N_PARAMS,
    Capsule,
    GraspPose,
    HandKinematics,
    Link,
    clamp_to_limits,
    link_frames,
)
from .model import (
    HandSurface,
    build_default_hand,
    capsule_segments,
    contact_probability,
    default_hand,
    fk_jacobian,
    forward_kinematics,
    hand_mesh,
    hand_meshes,
    palm_and_finger_directions,
    surface_gradient,
    surface_template,
    template_for,
)
