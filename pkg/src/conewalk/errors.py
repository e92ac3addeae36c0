"""Exception types shared across the package."""


class NumericalFailureError(RuntimeError):
    """An eigensolver, accumulation or sampler step produced garbage.

    Carries the offending array (when available) in ``payload``.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class ConeViolationError(NumericalFailureError):
    """A matrix that should lie in the PSD cone has an eigenvalue below
    the clamping tolerance.  This signals an implementation bug in the
    caller, not a recoverable state."""


class SamplerStallError(NumericalFailureError):
    """A rejection sampler accepted essentially nothing over a large
    proposal window."""

    def __init__(self, mu, q, proposals, accepts):
        super().__init__(
            f"contraction sampler stalled: mu={mu}, q={q}: "
            f"{accepts} accepts in {proposals} proposals"
        )
        self.mu = mu
        self.q = q
        self.proposals = proposals
        self.accepts = accepts


class UnsupportedFieldError(ValueError):
    """Operation is not implemented for the requested base field."""


class DegenerateDataError(ValueError):
    """Sample batch is degenerate (e.g. singular empirical covariance)."""


class StableRangeError(ValueError):
    """Argument outside the validated accuracy range of a special function."""


class ConfigError(ValueError):
    """Experiment configuration failed validation.  ``field`` names the
    offending entry."""

    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field
