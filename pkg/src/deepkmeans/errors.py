class ContractError(RuntimeError):
    """An internal precondition between cooperating calls was violated."""


class NumericError(ArithmeticError):
    """Non-finite values appeared during optimization."""


class DegenerateInputError(ValueError):
    """Input for which the requested quantity is undefined."""


class FormatError(ValueError):
    """A data file does not follow its declared layout."""


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
