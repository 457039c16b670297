"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1,
DataValidationError -> 2, NumericalError -> 3.
"""


class ConfigError(ValueError):
    """Bad configuration or usage (unknown key, invalid value, bad shapes in config)."""


class DimensionError(ValueError):
    """Tensor shape mismatch; message names both offending shapes."""


class DataValidationError(ValueError):
    """Malformed corpus record or vocabulary file; message names the record/line."""


class NumericalError(RuntimeError):
    """NaN/Inf encountered where finite values are required (loss, gradients)."""
