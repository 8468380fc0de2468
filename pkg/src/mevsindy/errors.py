"""Exception hierarchy.

Every error carries a short machine-readable ``code`` that the command line
front end writes into its report before exiting nonzero.
"""


class MevSindyError(Exception):
    code = "error"


class DegenerateInput(MevSindyError):
    code = "degenerate_input"


class SpectrumFlat(MevSindyError):
    code = "spectrum_flat"


class BandOutOfRange(MevSindyError):
    code = "band_out_of_range"


class TooShort(MevSindyError):
    code = "too_short"


class OutOfValidRange(MevSindyError):
    code = "out_of_valid_range"


class WindowOutOfRange(MevSindyError):
    code = "window_out_of_range"


class MissingLinearTerm(MevSindyError):
    code = "missing_linear_term"


class IncompatibleProblems(MevSindyError):
    code = "incompatible_problems"


class NotConverged(MevSindyError):
    code = "not_converged"


class ResidualTooLarge(MevSindyError):
    code = "residual_too_large"


class EmptySupport(MevSindyError):
    code = "empty_support"


class NonPositiveStiffness(MevSindyError):
    code = "non_positive_stiffness"


class BlowUp(MevSindyError):
    code = "blow_up"

    def __init__(self, message, escape_time=None):
        super().__init__(message)
        self.escape_time = escape_time


class NewtonDiverged(MevSindyError):
    code = "newton_diverged"


class SeedFailed(MevSindyError):
    code = "seed_failed"


class EmptySet(MevSindyError):
    code = "empty_set"


class DegenerateAxis(MevSindyError):
    code = "degenerate_axis"


class RankTooLarge(MevSindyError):
    code = "rank_too_large"


class DimensionMismatch(MevSindyError):
    code = "dimension_mismatch"


class InputValidationError(MevSindyError):
    code = "input_validation"


class RankDeficientWarning(UserWarning):
    """Stacked regression matrix has lower rank than the active support."""


class MissingVelocityWarning(UserWarning):
    """Velocity was reconstructed from displacement by finite differences."""
