"""Package exception hierarchy, mirrored by the CLI exit codes."""


class InvalidInputError(ValueError):
    """Bad parameters or configuration (CLI exit 2)."""


class NumericalError(RuntimeError):
    """A numerical evaluation failed or left its validity domain (CLI exit 3)."""


class ConvergenceError(NumericalError):
    """An iteration hit its budget before reaching tolerance (CLI exit 4)."""

    def __init__(self, message, gap=None, iterations=None):
        super().__init__(message)
        self.gap = gap
        self.iterations = iterations
