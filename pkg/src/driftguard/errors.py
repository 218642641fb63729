"""Exception hierarchy.

Every error raised on bad input derives from :class:`DriftGuardError`, which
is a :class:`ValueError`, so callers that only care about "bad data" can catch
the builtin.
"""


class DriftGuardError(ValueError):
    """Base class for all input and model errors."""


class AllValuesIdentical(DriftGuardError):
    pass


class NonCommensurable(DriftGuardError):
    pass


class OffLattice(DriftGuardError):
    def __init__(self, value, message=None):
        self.value = value
        super().__init__(message or f"value {value!r} is not on the quantization lattice")


class ScheduleMismatch(DriftGuardError):
    pass


class OutOfRange(DriftGuardError):
    pass


class DegenerateScale(DriftGuardError):
    pass


class TailMassTooLarge(DriftGuardError):
    pass


class DimensionMismatch(DriftGuardError):
    pass


class EmptyInterval(DriftGuardError):
    pass


class EmptyTruncation(DriftGuardError):
    pass


class TooLarge(DriftGuardError):
    pass


class StateSpaceTooLarge(DriftGuardError):
    pass


class IncompletePanel(DriftGuardError):
    pass
