"""Exception hierarchy shared across the toolkit."""


class MiBracketError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class UsageError(MiBracketError, ValueError):
    """An argument violates an operation's preconditions."""

    exit_code = 6


class ShapeError(UsageError):
    """Array dimensions do not line up."""


class DomainError(MiBracketError, ValueError):
    """A numeric input lies outside the domain of the operation."""

    exit_code = 3


class DataError(MiBracketError):
    """A feature file could not be parsed or validated."""

    exit_code = 3

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class TrainingFault(MiBracketError, FloatingPointError):
    """Training produced a non-finite quantity."""

    exit_code = 4

    def __init__(self, message, parameter=None, member=None, epoch=None):
        self.parameter = parameter
        self.member = member
        self.epoch = epoch
        super().__init__(message)

    def with_context(self, member=None, epoch=None):
        ctx = []
        if member is not None:
            ctx.append(f"member {member}")
        if epoch is not None:
            ctx.append(f"epoch {epoch}")
        msg = f"{self.args[0]} [{', '.join(ctx)}]" if ctx else self.args[0]
        return TrainingFault(msg, parameter=self.parameter, member=member, epoch=epoch)


class UndefinedRatioError(MiBracketError, ZeroDivisionError):
    """Source and filter MI are both zero, so the attribution ratio is undefined."""

    exit_code = 3


class ConfigError(MiBracketError):
    """One or more configuration fields are invalid."""

    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class ValidationFailure(MiBracketError):
    """The estimator validation battery reported failing checks."""

    exit_code = 5
