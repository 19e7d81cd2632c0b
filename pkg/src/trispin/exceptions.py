"""Exception hierarchy.

Grouped so the CLI can map failures to exit codes without inspecting
messages: configuration problems (exit 2), numerical failures (exit 3),
I/O problems (exit 4, plain OSError).
"""


class TrispinError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TrispinError):
    """Malformed or inconsistent configuration input."""


class NumericalError(TrispinError):
    """A computation could not produce a trustworthy result."""


class ResonanceError(NumericalError):
    """A perturbative denominator is too close to zero to evaluate."""


class AmbiguousSpectrumError(NumericalError):
    """Spectral peak extraction found competing peaks of similar weight."""


class RobustPointError(NumericalError):
    """The detuning search found no usable minimum in its bracket."""


class ThresholdNotCrossed(NumericalError):
    """A required threshold crossing did not occur within the simulated span."""
