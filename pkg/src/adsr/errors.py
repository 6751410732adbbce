"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(FloatingPointError):
    """NaN or non-finite values where finite numbers are required."""


class ConfigError(ValueError):
    """Invalid configuration value (probabilities, pool sizes, cutoffs...)."""


class ParseError(ValueError):
    """Malformed input file; message carries the offending line number."""


class DataError(ValueError):
    """Data integrity violation (missing attributes, empty dataset...)."""


class ContractError(ValueError):
    """A call violates an interface contract (missing inputs, wrong variant)."""
