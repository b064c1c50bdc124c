# core/exceptions.py
"""Errors raised by the numerical apps and translated to exit codes by the CLI."""


class IdsError(Exception):
    """Base class for every error the experiment runner raises on purpose."""


class DomainError(IdsError, ValueError):
    """A parameter lies outside its documented domain (p, t, bounds, amplitude...)."""


class InvalidScheduleError(IdsError, ValueError):
    """A Følner side-length schedule is not strictly increasing."""


class OutOfRangeError(IdsError, ValueError):
    """A translation moves a window outside the box it lives in."""


class DegeneracyError(IdsError):
    """Coincident points or numerically ambiguous Delaunay configurations."""

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class OperatorSizeError(IdsError):
    """An operator is too large for dense diagonalization."""

    def __init__(self, message, dimension=None, scale=None):
        super().__init__(message)
        self.dimension = dimension
        self.scale = scale


class NumericalError(IdsError):
    """The eigensolver did not converge; the matrix was dumped for inspection."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


class StatisticsError(IdsError):
    """Too few realizations for the requested statistic."""


class DegenerateGridError(IdsError):
    """Every evaluation point was excluded as jump-adjacent."""


class ConfigError(IdsError):
    """Invalid experiment configuration; `errors` maps field paths to messages."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = dict(errors or {})

    def diagnostics(self):
        return [f"{path}: {msg}" for path, messages in sorted(self.errors.items()) for msg in messages]
