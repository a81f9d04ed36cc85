"""Exception hierarchy. ``exit_code`` feeds the CLI: 2 = usage/input, 3 = numerical."""


class VplError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class InputError(VplError):
    """Malformed input files, bad configuration, unusable arguments."""

    exit_code = 2


class IngestError(InputError):
    pass


class FitError(VplError):
    """Degenerate or insufficient data for a distribution fit."""


class DecomposeError(VplError):
    pass


class DiagnosticsError(VplError):
    pass


class EstimationError(VplError):
    """Kramers-Moyal estimation could not produce usable bins."""


class SurfaceFitError(VplError):
    pass


class SimulationError(VplError):
    """Divergence or overflow during SDE integration."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class MomentOverflowError(SimulationError):
    pass
