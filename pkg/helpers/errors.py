"""Error types raised by the kinematics, learning and data helpers.

Every error carries a machine-readable ``code`` so the CLI can report it as a
single JSON line without inspecting the message text.
"""
from typing import Any, Optional


class KStarError(Exception):
    code: str = "KSTAR_ERROR"

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def as_dict(self) -> dict:
        return {"error": self.code, "message": self.message}


# URDF ingestion
class MalformedXml(KStarError):
    code = "MALFORMED_XML"


class MissingLink(KStarError):
    code = "MISSING_LINK"


class CycleDetected(KStarError):
    code = "CYCLE_DETECTED"


class UnsupportedJointKind(KStarError):
    code = "UNSUPPORTED_JOINT_KIND"


class ArmAssignmentError(KStarError):
    code = "ARM_ASSIGNMENT"


class NotConnected(KStarError):
    code = "NOT_CONNECTED"


class UnknownModel(KStarError):
    code = "UNKNOWN_MODEL"


# tape
class ShapeMismatch(KStarError):
    code = "SHAPE_MISMATCH"


class NotScalar(KStarError):
    code = "NOT_SCALAR"


class TapeMismatch(KStarError):
    code = "TAPE_MISMATCH"


# kinematics
class LengthMismatch(KStarError):
    code = "LENGTH_MISMATCH"


class Unreachable(KStarError):
    code = "UNREACHABLE"


class NoConvergence(KStarError):
    code = "NO_CONVERGENCE"


# graph
class InconsistentSlices(KStarError):
    code = "INCONSISTENT_SLICES"


# diffusion
class BadRange(KStarError):
    code = "BAD_RANGE"


class BadStep(KStarError):
    code = "BAD_STEP"


class BadLambda(KStarError):
    code = "BAD_LAMBDA"


# policy
class HistoryLengthMismatch(KStarError):
    code = "HISTORY_LENGTH_MISMATCH"


class NonFiniteLoss(KStarError):
    code = "NON_FINITE_LOSS"


# tasks and data
class ExpertFailed(KStarError):
    code = "EXPERT_FAILED"


class EmptyTrajectory(KStarError):
    code = "EMPTY_TRAJECTORY"


class IoError(KStarError):
    code = "IO_ERROR"


class SchemaViolation(KStarError):
    code = "SCHEMA_VIOLATION"

    def __init__(self, message: str = "", line: Optional[int] = None, **details: Any):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, **details)
        self.line = line


class ConfigError(KStarError):
    code = "CONFIG_ERROR"


class UsageError(KStarError):
    code = "USAGE_ERROR"
