"""Error taxonomy shared across the package.

Exit-code mapping used by the CLI lives in cli.py: ConfigError -> 2,
ColoringOverflowError -> 3, InvariantViolation -> 4.
"""


class ConfigError(ValueError):
    """Invalid user-supplied parameters (bad m, alpha, snr0, flags, ...)."""


class ColoringOverflowError(RuntimeError):
    """A group coloring needed more than the hard cap of 19 colors."""


class InvariantViolation(RuntimeError):
    """A runtime invariant of the protocol failed (e.g. relay shortfall)."""
