"""Exception hierarchy shared across the package.

Two families matter for callers: `ValidationError` (bad input data, CLI exit
code 1) and `NumericalError` (estimation failed on valid data, CLI exit code
2). Non-fatal conditions are surfaced as warnings, not exceptions.
"""


class ValidationError(Exception):
    """Input data violates a structural contract."""


class ChainBroken(ValidationError):
    """A subject's sojourn records are not chain-consistent."""

    def __init__(self, subject_id, seq, detail):
        self.subject_id = subject_id
        self.seq = seq
        super().__init__(f"subject {subject_id!r}, seq {seq}: {detail}")


class DisallowedTransition(ValidationError):
    def __init__(self, subject_id, seq, detail):
        self.subject_id = subject_id
        self.seq = seq
        super().__init__(f"subject {subject_id!r}, seq {seq}: {detail}")


class NonPositiveSojourn(ValidationError):
    def __init__(self, subject_id, seq, detail):
        self.subject_id = subject_id
        self.seq = seq
        super().__init__(f"subject {subject_id!r}, seq {seq}: {detail}")


class MissingCovariates(ValidationError):
    def __init__(self, subject_id, detail, seq=None):
        self.subject_id = subject_id
        self.seq = seq
        super().__init__(f"subject {subject_id!r}: {detail}")


class DatasetFormatError(ValidationError):
    """A CSV/config file does not match the documented schema."""


class EmptyCurve(ValidationError):
    """A curve file contains no data rows to plot."""


class InsufficientSamples(ValidationError):
    """Too few samples to form the requested empirical quantiles."""


class NumericalError(Exception):
    """An estimator failed on structurally valid input."""


class IncrementOutOfRange(NumericalError):
    """A cumulative-hazard increment left [0, 1], so no survival factor exists."""


class NonStochasticFactor(NumericalError):
    """A product-integral factor has an entry outside [0, 1]."""


class DimensionMismatch(NumericalError):
    """Matrix operands disagree on the state-space dimension."""


class Diverged(NumericalError):
    """Newton iterates escaped the coefficient ball (monotone likelihood)."""


class SingularInformation(NumericalError):
    """The information matrix is singular; coefficients are not identifiable."""


class MaxIterations(NumericalError):
    """The solver hit its iteration cap without meeting the score tolerance."""


class ZeroSurvivalAtStart(NumericalError):
    """Prediction conditioned on a sojourn the estimate assigns probability zero."""


class DegenerateRow(NumericalError):
    """A non-absorbing state has zero total exit hazard."""


class TooManyFailures(NumericalError):
    """More than half of the bootstrap refits failed to converge."""


class TruncationWarning(UserWarning):
    """Renewal series truncated before reaching the requested tolerance."""


class CensoringFallbackWarning(UserWarning):
    """No censored observations; bootstrap uses an administrative horizon."""
