"""Loss metrics for liquidity providers.

Two measures compare a provider's position now against the moment it
joined. Divergence loss marks both reserves at the pool's spot price.
Order loss marks the perishable reserve at what the resting bid book would
pay for it, using each bid's second price. Negative values mean loss for
divergence loss and profit for order loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from numbers import Real

from .errors import DomainError, MembershipError


@dataclass(frozen=True)
class LossSnapshot:
    share0: float
    x0: float
    y0: float
    price0: float
    orders0: tuple = field(default=())

    @classmethod
    def at_join(cls, share0, x0, y0, c0, orders0=()):
        return cls(share0, x0, y0, c0 * y0 / x0, tuple(orders0))


def _price(order):
    return float(order) if isinstance(order, Real) else float(order.price)


def divergence_loss(snapshot: LossSnapshot, share: float, state, c: float) -> float:
    """``s * (x + p y) - s0 * (x0 + p0 y0)`` with ``p = c y / x``."""
    x, y = state.x, state.y
    if not (x > 0 and y > 0):
        raise DomainError("divergence loss needs a positive pool state")
    p = c * y / x
    return share * (x + p * y) - snapshot.share0 * (snapshot.x0 + snapshot.price0 * snapshot.y0)


def dl_sensitivity(share: float, c_own: float, c_aggregate: float, state) -> float:
    """Partial derivative of divergence loss in the provider's own constant:
    ``y**2 s**2 c / (x c_own)``."""
    for name, v in (("share", share), ("c_own", c_own), ("c_aggregate", c_aggregate), ("x", state.x), ("y", state.y)):
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v}")
    return state.y**2 * share**2 * c_aggregate / (state.x * c_own)


def second_price(o, orders) -> float:
    """Largest price ``<= price(o)`` among the other orders, else ``price(o)``."""
    orders = list(orders)
    try:
        idx = orders.index(o)
    except ValueError:
        raise MembershipError(f"{o!r} is not in the order set") from None
    p = _price(o)
    below = [_price(q) for i, q in enumerate(orders) if i != idx and _price(q) <= p]
    return max(below) if below else p


def second_prices(orders) -> list:
    """``second_price`` of every order, in input order, in O(n log n)."""
    prices = [_price(o) for o in orders]
    ranked = sorted(range(len(prices)), key=lambda i: prices[i])
    out = [0.0] * len(prices)
    for pos, i in enumerate(ranked):
        p = prices[i]
        # sorted ascending: the nearest other order at or below p is the previous one
        out[i] = prices[ranked[pos - 1]] if pos > 0 else p
        if pos + 1 < len(ranked) and prices[ranked[pos + 1]] == p:
            out[i] = p
    return out


def _cap(y):
    if y < 0:
        raise DomainError("y must be nonnegative")
    return int(math.floor(y + 1e-9))


def min_profit(x: float, y: float, orders) -> float:
    """``x`` plus the best total second price of at most ``floor(y)`` orders."""
    if x < 0:
        raise DomainError("x must be nonnegative")
    k = _cap(y)
    best = sorted(second_prices(orders), reverse=True)[:k]
    return x + math.fsum(best)


def min_profit_exhaustive(x: float, y: float, orders, limit=12) -> float:
    """Reference ``min_profit`` that enumerates every subset of size <= floor(y)."""
    orders = list(orders)
    if len(orders) > limit:
        raise DomainError(f"subset enumeration capped at {limit} orders")
    k = _cap(y)
    sp = [second_price(o, orders) for o in orders]
    best = 0.0
    for size in range(0, min(k, len(orders)) + 1):
        for subset in combinations(range(len(orders)), size):
            best = max(best, math.fsum(sp[i] for i in subset))
    return x + best


def order_loss(snapshot: LossSnapshot, share: float, state, orders) -> float:
    """``s0 * minProfit(x0, y0; O0) - s * minProfit(x, y; O)``."""
    then = min_profit(snapshot.x0, snapshot.y0, snapshot.orders0)
    now = min_profit(state.x, state.y, orders)
    return snapshot.share0 * then - share * now
