"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class TierlabError(Exception):
    exit_code = 3


class UsageError(TierlabError):
    exit_code = 1


class InputError(TierlabError):
    """Bad input data or configuration."""

    exit_code = 2


class ConfigError(InputError):
    def __init__(self, message: str, keys: list[str] | None = None):
        self.keys = list(keys or [])
        if self.keys:
            message = f"{message} (keys: {', '.join(self.keys)})"
        super().__init__(message)


class TraceFormatError(InputError):
    """One or more malformed lines; ``problems`` holds ``(lineno, message)`` pairs."""

    def __init__(self, source: str, problems: list[tuple[int, str]]):
        self.source = source
        self.problems = problems
        shown = "; ".join(f"line {n}: {msg}" for n, msg in problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        super().__init__(f"{source}: {shown}{more}")


class TraceValidationError(InputError):
    pass


class CapacityError(InputError):
    pass


class PlanMismatchError(InputError):
    pass


class InvariantViolation(TierlabError):
    exit_code = 3
