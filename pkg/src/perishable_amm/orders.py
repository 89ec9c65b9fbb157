"""Bid book for bargain hunters and per-unit listings used at clearing.

Bids are single-unit, fully escrowed and locked: the price can only go up
and a bid cannot be withdrawn. Whenever the pool's all-in price for the next
unit drops to a bid's price, the bid executes against the pool at the pool's
price and the excess escrow is refunded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (
    BookFrozenError,
    DomainError,
    InsufficientInventoryError,
    LockedOrderError,
    MarketClosedError,
    OwnershipError,
    PoolHaltedError,
    PrematureSnapshotError,
    UnknownBidError,
)


@dataclass
class Bid:
    id: str
    user: str
    price: float
    escrow: float
    submitted_at: int
    hidden: bool = False
    seq: int = 0

    def sort_key(self):
        return (-self.price, self.submitted_at, self.seq)


@dataclass
class UnitListing:
    unit_id: str
    owner: str
    ask: float = 0.0
    seq: int = 0

    def sort_key(self):
        return (-self.ask, self.seq)


@dataclass(frozen=True)
class Fill:
    """Immediate execution of a resting bid against the pool."""

    bid_id: str
    user: str
    bid_price: float
    payment: float
    curve_cost: float
    fee: float
    refund: float
    credits: dict = field(default_factory=dict)


class OrderBook:
    """Open bids ordered by (price desc, submission asc) and unit listings
    ordered by (ask desc, insertion)."""

    def __init__(self, clearing_time, min_bid=0.0):
        self.clearing_time = clearing_time
        self.min_bid = min_bid
        self.frozen = False
        self._bids = {}
        self._order = []
        self._listings = {}
        self._seq = 0
        self.escrow_submitted = 0.0
        self.escrow_refunded = 0.0
        self.escrow_paid = 0.0
        self.price_history = {}

    # bids

    @property
    def bids(self):
        return list(self._order)

    def open_escrow(self):
        return math.fsum(b.escrow for b in self._order)

    def get(self, bid_id):
        try:
            return self._bids[bid_id]
        except KeyError:
            raise UnknownBidError(bid_id) from None

    def _resort(self):
        self._order.sort(key=Bid.sort_key)

    def _check_open(self):
        if self.frozen:
            raise BookFrozenError("book is frozen for clearing")

    def submit_bid(self, user, price, now, hidden=False):
        """Escrow ``price`` and rest a one-unit bid. Returns the bid id."""
        self._check_open()
        if now >= self.clearing_time:
            raise MarketClosedError(f"bids close at {self.clearing_time}, now {now}")
        if not (price > 0 and price > self.min_bid):
            raise DomainError(f"bid price must be positive and exceed {self.min_bid}, got {price}")
        self._seq += 1
        bid = Bid(f"b{self._seq:06d}", user, float(price), float(price), now, hidden, self._seq)
        self._bids[bid.id] = bid
        self._order.append(bid)
        self._resort()
        self.escrow_submitted += bid.escrow
        self.price_history[bid.id] = [bid.price]
        return bid.id

    def raise_bid(self, bid_id, new_price):
        """Raise a bid; the extra escrow is returned as the second element."""
        self._check_open()
        bid = self.get(bid_id)
        if not new_price > bid.price:
            raise LockedOrderError(f"bid {bid_id} can only be raised above {bid.price}, got {new_price}")
        added = new_price - bid.escrow
        bid.price = float(new_price)
        bid.escrow = float(new_price)
        self.escrow_submitted += added
        self.price_history[bid_id].append(bid.price)
        self._resort()
        return bid, added

    def lower_bid(self, bid_id, new_price):
        raise LockedOrderError(f"bid {bid_id} is locked and cannot be lowered")

    def withdraw_bid(self, bid_id):
        raise LockedOrderError(f"bid {bid_id} is locked and cannot be withdrawn")

    def _remove(self, bid):
        del self._bids[bid.id]
        self._order.remove(bid)

    def match_against_amm(self, pool, max_fills=None):
        """Execute every bid that crosses the pool's all-in next-unit price.

        The buyer pays the curve cost plus the pool fee, never the bid price.
        ``max_fills`` stops early so a caller can observe each fill's state.
        """
        fills = []
        while self._order and not pool.halted and (max_fills is None or len(fills) < max_fills):
            top = self._order[0]
            try:
                cost, fee = pool.buy_quote(1)
            except (InsufficientInventoryError, PoolHaltedError):
                break
            if top.price < cost + fee:
                break
            cost, fee, credits = pool.buy_units(1)
            payment = cost + fee
            refund = top.escrow - payment
            self._remove(top)
            self.escrow_paid += payment
            self.escrow_refunded += refund
            fills.append(Fill(top.id, top.user, top.price, payment, cost, fee, refund, credits))
        return fills

    def release(self, bid, payment):
        """Close a bid at clearing: ``payment`` leaves escrow, the rest is refunded."""
        refund = bid.escrow - payment
        if refund < -1e-12:
            raise DomainError(f"payment {payment} exceeds escrow {bid.escrow} of {bid.id}")
        self._remove(bid)
        self.escrow_paid += payment
        self.escrow_refunded += refund
        return refund

    # listings

    @property
    def listings(self):
        return sorted(self._listings.values(), key=UnitListing.sort_key)

    def allocate_units(self, pool, asks=None):
        """Give each provider its share of the remaining whole units.

        Largest-remainder rounding; ties go to the lexicographically smaller
        provider id. The fractional part of the reserve is not listed.
        """
        asks = asks or {}
        shares = pool.shares()
        n_units = int(math.floor(pool.state.y + 1e-9)) if not pool.halted else 0
        counts = largest_remainder(shares, n_units)
        self._listings.clear()
        unit = 0
        for pid in sorted(counts):
            for _ in range(counts[pid]):
                unit += 1
                listing = UnitListing(f"u{unit:06d}", pid, float(asks.get(pid, 0.0)), unit)
                self._listings[listing.unit_id] = listing
        return self.listings

    def set_unit_ask(self, owner, unit_id, ask):
        listing = self._listings.get(unit_id)
        if listing is None or listing.owner != owner:
            raise OwnershipError(f"{owner!r} does not own unit {unit_id!r}")
        if not ask >= 0:
            raise DomainError("ask must be nonnegative")
        listing.ask = float(ask)
        return listing

    def snapshot_for_clearing(self, pool, now):
        """Freeze the book and return ``(units, bids)`` both sorted descending."""
        if now < self.clearing_time:
            raise PrematureSnapshotError(f"clearing opens at {self.clearing_time}, now {now}")
        if not self._listings:
            self.allocate_units(pool)
        self.frozen = True
        return self.listings, self.bids


def largest_remainder(shares, total):
    """Apportion ``total`` whole items by ``shares`` with largest remainders."""
    if total <= 0 or not shares:
        return {pid: 0 for pid in shares}
    quotas = {pid: s * total for pid, s in shares.items()}
    counts = {pid: int(math.floor(q + 1e-12)) for pid, q in quotas.items()}
    left = total - sum(counts.values())
    by_remainder = sorted(quotas, key=lambda pid: (-(quotas[pid] - counts[pid]), pid))
    for pid in by_remainder[:left]:
        counts[pid] += 1
    return counts
