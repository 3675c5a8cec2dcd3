"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for invalid run configuration files or CLI usage."""


class NumericsError(RuntimeError):
    """Raised when a numerical procedure fails (divergence, non-convergence,
    violated stability bounds)."""
