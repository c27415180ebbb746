"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes (usage 1, data 2, protocol 3).
"""


class InputError(ValueError):
    """Caller passed values that violate an operation's preconditions."""


class ConfigError(ValueError):
    """Invalid configuration: bad parameter combination or schema violation."""


class DataError(ValueError):
    """Corrupt or inconsistent data files (corpora, datasets, manifests)."""


class DecodeError(RuntimeError):
    """Decoding could not produce the requested hypotheses."""


class ProtocolError(RuntimeError):
    """Wire-protocol violation by an external model process."""
