"""Exception types shared across the package."""


class DeedsimError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DeedsimError, ValueError):
    """An argument violates a documented precondition."""


class CorruptStreamError(DeedsimError, ValueError):
    """A bitstream cannot be decoded (truncated or inconsistent)."""


class RankDeficiencyError(DeedsimError, ValueError):
    """The requested problem has no unique optimum."""


class ConfigError(DeedsimError, ValueError):
    """One or more configuration entries are invalid.

    ``violations`` lists every failed check, not just the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class BoundViolationError(DeedsimError, AssertionError):
    """A run broke a convergence envelope or error-budget guarantee."""

    def __init__(self, kind, t, observed, allowed):
        self.kind = kind
        self.t = t
        self.observed = observed
        self.allowed = allowed
        super().__init__(
            f"{kind} violated at t={t}: observed {observed!r} > allowed {allowed!r}"
        )
