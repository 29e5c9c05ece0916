"""Exception types shared across the package.

The CLI maps each class onto a process exit code.
"""


class DyadflowError(Exception):
    exit_code = 1


class InputError(DyadflowError, ValueError):
    """Malformed or inconsistent user input."""

    exit_code = 2


class ProvenanceError(DyadflowError):
    """Stage-two analysis was handed a stage-one fit that used quality covariates."""

    exit_code = 3


class NumericalError(DyadflowError, FloatingPointError):
    """The sampler hit a non-finite state; ``state`` holds a dump for debugging."""

    exit_code = 4

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}
