from .backends import (
    API_KEY_ENV,
    STAGES,
    FixtureBackend,
    HeuristicBackend,
    HttpBackend,
    ReasonerBackend,
    ReasonRequest,
    StageRouter,
    make_backend,
)
from .directions import (
    CARDINALS,
    DIAGONALS,
    OPPOSITE,
    DirectionSet,
    align_rotation,
    build_direction_set,
    generate_rotation_candidates,
    initial_position,
    optimal_palm_direction,
    spin_angles,
)
from .stages import (
    ask,
    parse_label,
    parse_parts,
    parse_points,
    select_contact_parts,
    select_contact_points,
    select_direction,
    select_grasp_type,
    select_rotation,
)
from .transcript import StageRecord, StageTranscript

__all__ = [
    "API_KEY_ENV", "CARDINALS", "DIAGONALS", "OPPOSITE", "STAGES", "DirectionSet", "FixtureBackend",
    "HeuristicBackend", "HttpBackend", "ReasonRequest", "ReasonerBackend", "StageRecord", "StageRouter",
    "StageTranscript", "align_rotation", "ask", "build_direction_set", "generate_rotation_candidates",
    "initial_position", "make_backend", "optimal_palm_direction", "parse_label", "parse_parts",
    "parse_points", "select_contact_parts", "select_contact_points", "select_direction",
    "select_grasp_type", "select_rotation", "spin_angles",
]
