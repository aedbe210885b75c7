"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DegenerateInputError(ValueError):
    """Input is mathematically degenerate, e.g. a zero-norm vector."""


class ContractError(ValueError):
    """An argument violates the operation's contract."""


class ConfigError(ValueError):
    """A configuration value is outside its legal range."""


class CorpusError(ValueError):
    """A corpus file is unreadable or too malformed to trust."""


class NonFiniteLossError(RuntimeError):
    """A loss term became NaN or infinite during training."""
