"""Exception hierarchy.

Every error carries a machine-readable ``code`` (the class name unless
overridden) and the offending ``value`` so CLI diagnostics can report both.
"""


class ClimbPrintError(Exception):
    """Base class for all package errors."""

    code = "ClimbPrintError"

    def __init__(self, message, value=None):
        super().__init__(message)
        self.message = message
        self.value = value

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        cls.code = cls.__name__

    def __str__(self):
        if self.value is None:
            return f"[{self.code}] {self.message}"
        return f"[{self.code}] {self.message} (value={self.value!r})"


# geometry
class GeometryError(ClimbPrintError):
    pass


class DegeneratePath(GeometryError):
    pass


class SelfIntersection(GeometryError):
    pass


class OutOfRange(GeometryError):
    pass


class OffsetExceedsCurvatureRadius(GeometryError):
    pass


class ChordExceedsDiameter(GeometryError):
    pass


# deposition
class DepositionError(ClimbPrintError):
    pass


class NonPositiveInput(DepositionError):
    pass


class NonMonotonicTimestamps(DepositionError):
    pass


# kinematics
class KinematicsError(ClimbPrintError):
    pass


class WallTooCurved(KinematicsError):
    pass


class SpeedLimitExceeded(KinematicsError):
    pass


class WallTooThin(KinematicsError):
    pass


class WallTooThick(KinematicsError):
    pass


class ExtrusionActiveDuringClimb(KinematicsError):
    pass


class OpenPathSpiral(KinematicsError):
    pass


class HeadTravelExceeded(KinematicsError):
    pass


# planner
class PlanError(ClimbPrintError):
    pass


class InclinationTooSteep(PlanError):
    pass


class CureTimeInfeasible(PlanError):
    pass


class FootprintInvalid(PlanError):
    pass


class FootprintTooShort(FootprintInvalid):
    pass


class FootprintUnclampable(FootprintInvalid):
    pass


class DesignInvalid(PlanError):
    pass


# controller
class LimitViolation(ClimbPrintError):
    def __init__(self, message, value=None, t=None, index=None):
        super().__init__(message, value)
        self.t = t
        self.index = index

    def __str__(self):
        where = ""
        if self.index is not None:
            where = f" at record {self.index} (t={self.t!r})"
        return super().__str__() + where


# simulator
class SimulationError(ClimbPrintError):
    pass


class TraceDesignMismatch(SimulationError):
    pass


class TooFewLayers(SimulationError):
    pass


class EmptyStructure(SimulationError):
    pass


# cli_io
class ParseError(ClimbPrintError):
    def __init__(self, message, value=None, line=None, column=None):
        super().__init__(message, value)
        self.line = line
        self.column = column

    def __str__(self):
        pos = f" at line {self.line}, column {self.column}" if self.line is not None else ""
        return f"[{self.code}] {self.message}{pos}"


class ValidationError(ClimbPrintError):
    """One or more field-level problems in a design file.

    ``issues`` is a list of ``(field_path, constraint, value)`` triples.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        lines = [f"{path}: {constraint} (value={value!r})" for path, constraint, value in self.issues]
        super().__init__("; ".join(lines), value=None)
