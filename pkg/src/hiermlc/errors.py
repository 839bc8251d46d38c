"""Exception types the CLI maps onto its exit-code contract."""


class ConfigError(Exception):
    """Bad usage or run configuration (exit code 1)."""


class DataFormatError(Exception):
    """Malformed or inconsistent input data (exit code 2)."""


class NumericError(Exception):
    """Numeric failure during training, e.g. non-finite loss (exit code 3)."""
