class DomainError(ValueError):
    """Input outside the domain of an operation."""


class RenormalizationTooSparse(ArithmeticError):
    """An intermediate cocycle product overflowed between two renormalizations."""


class IncompatibleGridError(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class BaseNotDegenerate(RuntimeError):
    """The unperturbed system of a perturbation sweep already has a nonzero exponent."""
