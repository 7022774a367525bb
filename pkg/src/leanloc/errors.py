"""Exception types shared across the pipeline, mapped to CLI exit codes."""


class LeanlocError(Exception):
    """Base class for all pipeline errors."""


class ConfigurationError(LeanlocError):
    """Invalid experiment, grid, or generator configuration (exit code 1)."""


class DataIntegrityError(LeanlocError):
    """Malformed or inconsistent data: schema violations, duplicate ids,
    broken references (exit code 2)."""


class EmptyModelError(DataIntegrityError):
    """Scene mesh contains no triangles."""


class MeshParseError(DataIntegrityError):
    """Mesh file violates the documented grammar."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")
