"""Exception types shared across the package."""


class CatalogError(ValueError):
    """Requested system name is not in the catalog."""


class ConfigurationError(ValueError):
    """Invalid parameter key, dimension mismatch, or malformed configuration."""


class RankDeficiencyError(ValueError):
    """Normal-equations Gram matrix is singular; regularization is needed."""


class SimulationOverflowError(ArithmeticError):
    """A simulated state left the finite admissible range.

    Carries the step index at which the blow-up was detected.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"state overflow at step {step}")
