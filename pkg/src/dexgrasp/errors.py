"""Exception hierarchy shared across the package."""


class DexGraspError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(DexGraspError):
    exit_code = 2


class InvalidMesh(InputError):
    pass


class DegenerateHull(DexGraspError):
    pass


class OriginOutsideHull(DexGraspError):
    pass


class NoIntersection(DexGraspError):
    pass


class EmptyCloud(InputError):
    pass


class InvalidPose(InputError):
    pass


class InvalidCamera(InputError):
    pass


class EmptyMask(InputError):
    pass


class UnknownRegion(InputError):
    pass


class NoVisibleContact(DexGraspError):
    pass


class InvalidContactPixel(DexGraspError):
    pass


class DegenerateFrame(DexGraspError):
    pass


class DegenerateForceAxis(DexGraspError):
    pass


class ConfigError(InputError):
    pass


class BackendError(DexGraspError):
    exit_code = 3


class ReasoningParseError(BackendError):
    pass


class NoFeasibleRotation(DexGraspError):
    exit_code = 4


class EmptyContactTarget(DexGraspError):
    pass


class OptimizationDiverged(DexGraspError):
    exit_code = 5

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SimulationDiverged(DexGraspError):
    pass


class EmptyBatch(InputError):
    pass


class StageError(DexGraspError):
    """Wraps an error raised inside a pipeline stage."""

    def __init__(self, stage, cause, transcript_path=None):
        where = f" (transcript: {transcript_path})" if transcript_path else ""
        super().__init__(f"stage '{stage}' failed: {cause}{where}")
        self.stage = stage
        self.cause = cause
        self.transcript_path = transcript_path
        self.exit_code = getattr(cause, "exit_code", 1)
