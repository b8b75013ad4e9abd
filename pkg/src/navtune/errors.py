"""Exception types shared across the package.

The CLI maps these onto exit codes: bad inputs exit 2, stage failures exit 3.
"""


class NavtuneError(Exception):
    """Base class for all package errors."""


class InvalidInputError(NavtuneError):
    """A file, pose, or configuration violates a precondition."""


class SimulationError(NavtuneError):
    """The simulator was driven into an invalid state (e.g. pose off-map)."""


class UnreachableError(NavtuneError):
    """The global planner found no path between start and goal."""


class SchemaError(NavtuneError):
    """A serialized artifact or wire message has an unknown or broken layout."""


class StageError(NavtuneError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
