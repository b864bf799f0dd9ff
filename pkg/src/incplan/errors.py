"""Exception types shared across the package."""


class SchemaError(Exception):
    """Operand schemas are incompatible for the requested operation."""


class NotInvertibleError(Exception):
    """A merge operator without an inverse was asked to subtract."""


class ContractError(Exception):
    """An internal precondition was violated by the caller."""


class RangeError(Exception):
    """A time point lies outside the session timeline."""


class StatsError(Exception):
    """Cardinality statistics are missing for a plan node."""


class UnplannableError(Exception):
    """No valid temporal assignment exists for the requested output."""


class StateError(Exception):
    """A Load referenced a state that was never saved."""


class ValidationError(Exception):
    """Executed output disagrees with the batch oracle."""

    def __init__(self, message, diff=None):
        super().__init__(message)
        self.diff = diff
