"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (overlap, bad index, ...)."""


class DomainError(ValueError):
    """A numeric argument is outside the domain of the function."""


class ModelConfigError(ValueError):
    """Likelihood or prior hyperparameters are invalid."""


class ConfigError(ValueError):
    """An experiment configuration could not be validated."""


class ParseError(ValueError):
    """A data file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
