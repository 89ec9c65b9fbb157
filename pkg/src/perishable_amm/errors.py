"""Exception hierarchy shared by every module."""


class AMMError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(AMMError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InsufficientInventoryError(AMMError):
    """A trade would drain the perishable reserve to zero or below."""


class BoundsError(AMMError, ValueError):
    """A curve constant lies outside the admissible interval [a, b]."""


class EmptyPoolError(AMMError):
    pass


class PoolHaltedError(AMMError):
    pass


class NotAnEpochError(AMMError):
    """Liquidity changes are only accepted at open epoch times."""


class UnknownProviderError(AMMError, KeyError):
    pass


class MarketClosedError(AMMError):
    pass


class LockedOrderError(AMMError):
    """Bids can only be raised; they cannot be lowered or withdrawn."""


class UnknownBidError(AMMError, KeyError):
    pass


class OwnershipError(AMMError):
    pass


class PrematureSnapshotError(AMMError):
    pass


class BookFrozenError(AMMError):
    pass


class SizeLimitError(AMMError):
    pass


class DoubleSettlementError(AMMError):
    pass


class MembershipError(AMMError, ValueError):
    pass


class ScenarioParseError(AMMError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ScenarioValidationError(AMMError):
    """Carries every violated invariant, not just the first one found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {p}" for p in self.problems))


class IncompleteTraceError(AMMError):
    pass
