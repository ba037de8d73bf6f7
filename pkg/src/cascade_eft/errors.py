"""Exception hierarchy for cascade_eft.

Physics-level misuse (wrong regime, resonant denominators, bad geometry)
is distinguished from numerical failures so the CLI can map them to
distinct exit codes.
"""


class CascadeError(Exception):
    """Base class for all cascade_eft errors."""


class DegenerateDispersionError(CascadeError):
    """Second derivative of the dispersion vanishes at the carrier."""


class ResonanceError(CascadeError):
    """A coupling denominator is within tolerance of an exact resonance."""


class RegimeError(CascadeError):
    """Operation called outside its regime of validity."""


class GeometryError(CascadeError):
    """Momentum-band geometry is inconsistent (e.g. band touches the
    resonance ellipse)."""


class DomainError(CascadeError):
    """Argument outside the mathematical domain of a coefficient function."""


class BasisSizeError(CascadeError):
    """Requested occupation-number basis exceeds the configured cap."""

    def __init__(self, estimate: int, cap: int):
        self.estimate = estimate
        self.cap = cap
        super().__init__(
            f"basis dimension estimate {estimate} exceeds cap {cap}"
        )


class FrameError(CascadeError):
    """Quantum state is in the wrong frame for the requested operation."""


class NumericalAbort(CascadeError):
    """Propagation aborted: drift or positivity violation beyond bounds."""


class ConfigError(CascadeError):
    """Experiment configuration failed validation."""
