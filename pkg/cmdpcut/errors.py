"""Exception hierarchy for the cmdpcut package."""


class CmdpError(Exception):
    """Base class for every error raised by cmdpcut."""


class DimensionError(CmdpError, ValueError):
    """Array shapes do not match the instance they are used with."""


class InvalidInstanceError(CmdpError, ValueError):
    """A CMDP instance violates one of its invariants."""


class InstanceFormatError(InvalidInstanceError):
    """An instance document is malformed; knows where."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(field)
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


class InvalidParameterError(CmdpError, ValueError):
    """A tunable is outside its admissible range."""


class NpgError(CmdpError, ValueError):
    """Bad input to the natural policy gradient routines."""


class InteriorError(CmdpError):
    """A point is not strictly inside the polytope."""


class UnboundedPolytopeError(CmdpError):
    """The polytope {x : Ax >= b} is unbounded or has empty interior."""


class VolumetricCenterError(CmdpError):
    """Newton's method for the volumetric center did not converge."""


class DegenerateCutError(CmdpError):
    """A cut was requested with a zero normal vector."""


class SlaterError(CmdpError):
    """The instance has no strictly feasible policy (xi <= 0)."""


class NoDualIterateError(CmdpError):
    """The cutting-plane run never visited a nonnegative dual point."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class IterationLimitError(CmdpError):
    """An iterative routine hit its iteration cap."""


class GenerationError(CmdpError):
    """Random instance generation exhausted its retry budget."""
