"""Exception types.  Each maps to a CLI exit code."""


class ConfigError(ValueError):
    exit_code = 2


class MeshError(ValueError):
    exit_code = 2


class SolverError(RuntimeError):
    """A state or adjoint solve failed; ``history`` holds residual norms if any."""

    exit_code = 3

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class SingularSystemError(SolverError):
    pass


class ArtifactError(OSError):
    exit_code = 4
