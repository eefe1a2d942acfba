class AgrError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModel(AgrError, ValueError):
    pass


class ZeroProbabilityObservation(AgrError, ValueError):
    """The observation has zero likelihood under the current belief."""


class EpisodeFinished(AgrError, RuntimeError):
    pass


class TreeTooLarge(AgrError, RuntimeError):
    pass


class UndefinedPolicyAction(AgrError, KeyError):
    pass


class SpecInconsistent(AgrError, ValueError):
    pass


class InvalidParams(AgrError, ValueError):
    pass


class InvalidLayout(AgrError, ValueError):
    pass


class EmptyActionSet(AgrError, ValueError):
    pass


class MissingFactorizationMetadata(AgrError, ValueError):
    pass


class DimensionMismatch(AgrError, ValueError):
    pass


class DegenerateGoalSet(AgrError, ValueError):
    pass


class NonConvergence(UserWarning):
    """Emitted (not raised) when a solver stops above its residual target."""


class SpecFileError(AgrError, ValueError):
    """Malformed declarative spec, layout or interchange file."""

    def __init__(self, message, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        where = str(path) if path is not None else ""
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        if field is not None:
            where += f" [{field}]"
        super().__init__(f"{where.strip()}: {message}" if where else message)
