"""Error taxonomy shared by the library and the CLI exit codes."""


class CapflowError(Exception):
    """Base for errors that carry a CLI exit code."""

    exit_code = 1


class ConfigError(CapflowError, ValueError):
    """Bad configuration: unknown key, type mismatch, missing field."""

    exit_code = 1


class GeometryError(CapflowError, ValueError):
    """Set construction failed: resolution too coarse, invalid geometry."""

    exit_code = 2


class SolverError(CapflowError, RuntimeError):
    """Optimization did not converge within its budget."""

    exit_code = 3


class InvariantError(CapflowError, AssertionError):
    """A certified invariant failed during a run."""

    exit_code = 4
