class UmforestError(Exception):
    """Base class for all errors raised by umforest."""


class MalformedDendrogram(UmforestError, ValueError):
    """A tree violates a structural invariant that canonicalisation cannot repair."""


class NotUltrametric(UmforestError, ValueError):
    """A distance matrix is not an ultrametric within tolerance."""

    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple


class DomainError(UmforestError, ValueError):
    """An argument is outside the domain of the operation (e.g. a part is not an h-forest)."""


class BudgetExceeded(UmforestError, RuntimeError):
    """An exact enumeration would exceed the declared budget."""
