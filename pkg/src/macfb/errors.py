"""Exception types shared across the package."""


class MacfbError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(MacfbError):
    """A table's shape does not match the problem dimensions."""


class NotStochastic(MacfbError):
    """A conditional-probability row does not sum to one."""


class NegativeEntry(MacfbError):
    """A probability table contains a negative entry."""


class ZeroProbabilityObservation(MacfbError):
    """Conditioning on a channel output that has zero probability."""


class ZeroProbabilityInput(MacfbError):
    """Conditioning a private belief on an input symbol that cannot occur."""


class BudgetExceeded(MacfbError):
    """An enumeration grew past its configured cap."""


class IncompletePolicy(MacfbError):
    """A policy tree has no action for a reachable belief node."""


class NegativeInformation(MacfbError):
    """A stage information quantity came out negative beyond tolerance."""


class ConfigError(MacfbError):
    """An experiment configuration failed validation."""
