"""Exceptions raised across the package."""


class SoftAnchorError(Exception):
    """Base class for every error raised by softanchor_swarm."""


class InvalidPolygonError(SoftAnchorError, ValueError):
    """A polygon is degenerate, clockwise or non-convex."""


class PairAssignmentError(SoftAnchorError, ValueError):
    """Connection pairs cannot be built from the given target or endpoints."""


class ConfigError(SoftAnchorError):
    """A scenario configuration failed to load or validate.

    Attributes:
        errors (list[str]): One ``"field.path: message"`` entry per problem.
    """

    def __init__(self, message: str, errors: list[str] | None = None):
        """Initialize the error with an optional list of field-level problems.

        Args:
            message (str): Summary of the failure.
            errors (list[str], optional): Field-level diagnostics.
        """
        self.errors = errors or []
        details = "".join(f"\n  - {error}" for error in self.errors)
        super().__init__(f"{message}{details}")


class SolverFailure(SoftAnchorError):
    """The planner kept failing past the configured fail-safe budget."""
