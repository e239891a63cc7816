"""Error types that the command line maps to exit codes."""


class ConfigError(ValueError):
    """Invalid or unusable configuration (exit code 3)."""


class DataError(ValueError):
    """Malformed or missing input records (exit code 4)."""
