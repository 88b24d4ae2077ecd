"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit 1, numerical
failures exit 2, I/O problems exit 3.
"""


class PanelSarError(Exception):
    """Base class for all package errors."""


class ValidationError(PanelSarError):
    """Malformed inputs: bad dimensions, non-finite values, schema violations."""


class NumericalError(PanelSarError):
    """Numerical failure: singular solves, non-finite intermediates, blow-ups."""


class EquationFitError(NumericalError):
    """A single per-unit regression failed; carries the offending unit."""

    def __init__(self, unit_id: str, stage: int, cause: Exception):
        self.unit_id = unit_id
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage} equation for unit {unit_id!r} failed: {cause}")
