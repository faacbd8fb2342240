"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HKError(Exception):
    """Base class for every error raised by hklapse."""


class DomainError(HKError, ValueError):
    """An argument is outside the domain an operation accepts."""


class SpecError(HKError, ValueError):
    """An influence or weight specification violates its declared hypotheses."""


class CertificationError(HKError):
    """The weight condition could not be certified.

    ``interval`` is the offending ``(start, end)`` window and ``integral``
    the quadrature value found on it, when available.
    """

    def __init__(self, message: str, interval: tuple[float, float] | None = None,
                 integral: float | None = None):
        super().__init__(message)
        self.interval = interval
        self.integral = integral


class IntegrationError(HKError):
    """Time stepping failed (non-finite state or inconsistent grid)."""

    def __init__(self, message: str, node: int | None = None, time: float | None = None):
        super().__init__(message)
        self.node = node
        self.time = time


class BudgetError(HKError):
    """A study would exceed its configured work budget."""
