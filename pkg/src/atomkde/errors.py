"""Exception types shared across the package."""


class InputDataError(ValueError):
    """Raised for rejected input data (non-finite coordinates, parse failures)."""


class ContractError(ValueError):
    """Raised when arguments violate an API contract (mismatched objects, bad arity)."""


class DegenerateDataError(ValueError):
    """Raised when a data-driven rule cannot produce a result (e.g. Silverman's
    rule on fewer than two points); callers may fall back to a fixed bandwidth."""
