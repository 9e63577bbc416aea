"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Arguments violate an operation's preconditions."""


class CapacityError(RuntimeError):
    """An exhaustive computation would exceed its configured cap."""

    def __init__(self, message: str, cap: int | None = None):
        super().__init__(message)
        self.cap = cap


class InsufficientDataError(RuntimeError):
    """Too few usable Monte Carlo points to fit a rate."""

    def __init__(self, message: str, usable_k: list[int] | None = None):
        super().__init__(message)
        self.usable_k = list(usable_k or [])
