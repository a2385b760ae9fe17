"""Exception hierarchy shared by every module of the package."""


class GfmError(Exception):
    """Base class for all package errors."""


class InvalidInputError(GfmError, ValueError):
    pass


class SingularityError(GfmError, ArithmeticError):
    pass


class VoltageCollapseError(GfmError):
    pass


class OscillatorCollapseError(GfmError):
    pass


class TransferLimitError(GfmError):
    """Requested power exceeds the static transfer limit V1*V2/X."""


class ConstraintViolationError(GfmError, ValueError):
    pass


class InfeasibleError(GfmError):
    pass


class ConfigError(GfmError, ValueError):
    """Bad configuration. ``field`` and ``line`` locate the offending entry when known."""

    def __init__(self, message, field=None, line=None):
        self.reason = message
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SimulationAbort(GfmError):
    """A sub-operation failed mid-run; ``time`` is the offending timestamp in seconds."""

    def __init__(self, time, cause):
        self.time = time
        self.cause = cause
        super().__init__(f"simulation aborted at t={time:.6f} s: {cause}")


class NumericFailure(GfmError, ArithmeticError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")


class OptimizationFailure(GfmError):
    pass


class UndefinedCorrelationError(GfmError, ValueError):
    pass
