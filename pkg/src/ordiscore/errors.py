"""Error types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: config, schema, data file, or artifact mismatch."""


class ConvergenceError(RuntimeError):
    """An iterative fit failed in a way that cannot be reported as a result."""
