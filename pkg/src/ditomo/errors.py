class StructuralError(ValueError):
    """Input has the wrong shape or structure (non-square, non-Hermitian, bad index)."""


class DegenerateDataError(ValueError):
    """Count data carries no usable information (zero totals)."""


class SolverStallError(RuntimeError):
    """Barrier solver line search failed; ``diagnostics`` holds the solver state."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    pass
