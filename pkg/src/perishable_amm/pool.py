"""Liquidity-provider registry, epoch discipline and share accounting.

The pool curve exponent is the share-weighted geometric mean of the
providers' constants. Constants, joins and exits only take effect at the
epoch times of an :class:`EpochSchedule`; between epochs the curve is fixed
and trades move the state along it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import curve
from .curve import Bounds, CurveParams, PoolState
from .errors import (
    DomainError,
    EmptyPoolError,
    InsufficientInventoryError,
    NotAnEpochError,
    PoolHaltedError,
    UnknownProviderError,
)

SHARE_TOL = 1e-12
DEFAULT_FEE_RATE = 0.003


@dataclass(frozen=True)
class JoinSnapshot:
    """State recorded right after a provider joined, for loss accounting."""

    x0: float
    y0: float
    c0: float
    share0: float
    price0: float


@dataclass
class LiquidityProvider:
    id: str
    share: float
    constant: float
    join_snapshot: JoinSnapshot | None = None
    fees_accrued: float = 0.0


@dataclass(frozen=True)
class EpochSchedule:
    times: tuple
    clearing_time: int
    retrieval_time: int

    def __post_init__(self):
        times = tuple(self.times)
        object.__setattr__(self, "times", times)
        if not times:
            raise DomainError("schedule needs at least one epoch time")
        gaps = {b - a for a, b in zip(times, times[1:])}
        if any(g <= 0 for g in gaps):
            raise DomainError("epoch times must be strictly increasing")
        if len(gaps) > 1:
            raise DomainError("epoch times must be uniformly spaced")
        if not (times[-1] < self.clearing_time < self.retrieval_time):
            raise DomainError("need max(times) < clearing_time < retrieval_time")

    @classmethod
    def uniform(cls, count, stride, start=0):
        """Integer-tick schedule: epochs every ``stride`` ticks, clearing one
        stride after the last epoch, retrieval one tick after clearing."""
        if count < 1 or stride < 1:
            raise DomainError("need count >= 1 and stride >= 1")
        times = tuple(start + i * stride for i in range(count))
        clearing = times[-1] + stride
        return cls(times, clearing, clearing + 1)

    def __contains__(self, t):
        return t in self.times


def aggregate_constant(providers) -> float:
    """Share-weighted geometric mean ``prod(c_l ** s_l)`` of provider constants."""
    providers = list(providers)
    if not providers:
        raise EmptyPoolError("no liquidity providers to aggregate")
    total = math.fsum(p.share for p in providers)
    if abs(total - 1.0) > 1e-9:
        raise DomainError(f"shares must sum to 1, got {total}")
    # product of powers keeps c ** 1 exact; zero shares are skipped outright
    return math.prod(p.constant**p.share for p in providers if p.share > 0)


@dataclass
class _Pending:
    seq: int
    provider_id: str
    constant: float


@dataclass
class Pool:
    """Mutable pool state machine; every mutation goes through its methods."""

    state: PoolState
    curve: CurveParams
    bounds: Bounds
    schedule: EpochSchedule
    fee_rate: float = DEFAULT_FEE_RATE
    providers: dict = field(default_factory=dict)
    clock: int = 0
    last_tick: int | None = None
    halted: bool = False
    _pending: list = field(default_factory=list, repr=False)
    _seq: int = field(default=0, repr=False)

    @classmethod
    def open(cls, x, y, constant, owner, bounds, schedule, fee_rate=DEFAULT_FEE_RATE, at=None):
        """Create a pool seeded by a single provider holding the whole share."""
        if not (0 <= fee_rate < 1):
            raise DomainError(f"fee_rate must lie in [0, 1), got {fee_rate}")
        if not (x > 0 and y > 0):
            raise DomainError("initial reserves must be positive")
        bounds.check(constant)
        at = schedule.times[0] if at is None else at
        if at not in schedule:
            raise NotAnEpochError(f"time {at} is not an epoch time")
        state = PoolState(float(x), float(y))
        pool = cls(state, CurveParams(constant, state.x, state.y), bounds, schedule, fee_rate, clock=at)
        pool.providers[owner] = LiquidityProvider(owner, 1.0, constant)
        pool._snapshot(owner)
        return pool

    # queries

    @property
    def c(self):
        return self.curve.c

    def share_of(self, provider_id):
        return self._get(provider_id).share

    def shares(self):
        return {pid: p.share for pid, p in self.providers.items()}

    def spot_price(self):
        return curve.spot_price(self.curve, self.state.x)

    def fee_vault(self):
        return math.fsum(p.fees_accrued for p in self.providers.values())

    def buy_quote(self, n=1):
        """(curve cost, fee) for taking ``n`` units out of the pool."""
        cost = curve.cost_to_buy_units(self.curve, self.state, n)
        return cost, self.fee_rate * cost

    # internals

    def _get(self, provider_id):
        try:
            return self.providers[provider_id]
        except KeyError:
            raise UnknownProviderError(provider_id) from None

    def _require_epoch(self, at):
        if at not in self.schedule:
            raise NotAnEpochError(f"time {at} is not an epoch time")
        if self.last_tick is not None and at <= self.last_tick:
            raise NotAnEpochError(f"epoch {at} has already ticked")
        if at < self.clock:
            raise NotAnEpochError(f"epoch {at} is in the past (clock {self.clock})")
        self.clock = at

    def _require_trading(self):
        if self.halted or not self.providers:
            raise PoolHaltedError("pool has no liquidity")

    def _reaggregate(self):
        c = aggregate_constant(self.providers.values())
        self.curve = curve.rebase(self.curve, c, self.state)

    def _snapshot(self, provider_id):
        p = self.providers[provider_id]
        x0, y0, c0 = self.state.x, self.state.y, self.curve.c
        p.join_snapshot = JoinSnapshot(x0, y0, c0, p.share, c0 * y0 / x0)

    # epoch-gated mutations

    def join(self, provider_id, deposit_x, c_new, at):
        """Add liquidity in the current reserve ratio and return the deposit of Y.

        The new share is ``deposit_x / (x + deposit_x)``; existing shares scale
        by ``x / (x + deposit_x)``, so the spot price is unchanged whenever the
        aggregate constant is.
        """
        if not deposit_x > 0:
            raise DomainError("deposit_x must be positive")
        self.bounds.check(c_new)
        self._require_epoch(at)
        self._require_trading()
        if provider_id in self.providers:
            raise DomainError(f"provider {provider_id!r} already in the pool")
        x, y = self.state.x, self.state.y
        deposit_y = deposit_x * (y / x)
        scale = x / (x + deposit_x)
        for p in self.providers.values():
            p.share *= scale
        self.providers[provider_id] = LiquidityProvider(provider_id, deposit_x / (x + deposit_x), c_new)
        self._normalize()
        self.state = PoolState(x + deposit_x, y + deposit_y)
        self._reaggregate()
        self._snapshot(provider_id)
        return deposit_y

    def update_constant(self, provider_id, c_new, at):
        """Queue a constant change; it is applied by the tick at ``at``."""
        self.bounds.check(c_new)
        self._require_epoch(at)
        self._get(provider_id)
        self._seq += 1
        self._pending.append(_Pending(self._seq, provider_id, c_new))

    def epoch_tick(self, at):
        """Apply queued constant changes in submission order and rebase the curve."""
        self._require_epoch(at)
        for item in sorted(self._pending, key=lambda q: q.seq):
            # exited providers no longer steer the curve
            if item.provider_id in self.providers:
                self.providers[item.provider_id].constant = item.constant
        self._pending.clear()
        self.last_tick = at
        if self.providers and not self.halted:
            self._reaggregate()

    def remove_liquidity(self, provider_id, at):
        """Pro-rata exit. Returns ``(payout_x, payout_y, fees)``."""
        self._require_epoch(at)
        p = self._get(provider_id)
        payout_x, payout_y = p.share * self.state.x, p.share * self.state.y
        fees = p.fees_accrued
        del self.providers[provider_id]
        if not self.providers:
            self.state = PoolState(0.0, 0.0)
            self.halted = True
            return payout_x, payout_y, fees
        rest = 1.0 - p.share
        for q in self.providers.values():
            q.share /= rest
        self._normalize()
        self.state = PoolState(self.state.x - payout_x, self.state.y - payout_y)
        self._reaggregate()
        return payout_x, payout_y, fees

    def _normalize(self):
        total = math.fsum(p.share for p in self.providers.values())
        for p in self.providers.values():
            p.share /= total

    # trading

    def accrue_and_distribute_fees(self, trade_x):
        """Credit ``fee_rate * trade_x`` to providers by share; reserves untouched."""
        if trade_x < 0:
            raise DomainError("trade_x must be nonnegative")
        fee = self.fee_rate * trade_x
        credits = {}
        if fee > 0:
            for pid, p in self.providers.items():
                credit = p.share * fee
                p.fees_accrued += credit
                credits[pid] = credit
        return fee, credits

    def buy_units(self, n=1):
        """Move the pool along the curve by ``n`` units out.

        Returns ``(curve_cost, fee, credits)``; the trader pays ``curve_cost + fee``.
        """
        self._require_trading()
        cost = curve.cost_to_buy_units(self.curve, self.state, n)
        new_y = self.state.y - n
        self.state = PoolState((self.curve.k / new_y) ** (1.0 / self.curve.c), new_y)
        fee, credits = self.accrue_and_distribute_fees(cost)
        return cost, fee, credits

    def sell_units(self, n=1):
        """Move the pool along the curve by ``n`` units in.

        Returns ``(curve_proceeds, fee, credits)``; the trader receives
        ``curve_proceeds - fee``.
        """
        self._require_trading()
        proceeds = curve.proceeds_to_sell_units(self.curve, self.state, n)
        new_y = self.state.y + n
        self.state = PoolState((self.curve.k / new_y) ** (1.0 / self.curve.c), new_y)
        fee, credits = self.accrue_and_distribute_fees(proceeds)
        return proceeds, fee, credits

    def withdraw_units(self, n):
        """Remove whole units off-curve for end-of-life clearing.

        Trading is closed by then, so the curve invariant no longer applies.
        """
        if n > self.state.y + 1e-9:
            raise InsufficientInventoryError(f"only {self.state.y} units left")
        self.state = replace(self.state, y=max(self.state.y - n, 0.0))

    def retrieve(self):
        """Pay every provider its share of what is left and empty the pool.

        Returns ``{provider_id: (payout_x, payout_y, fees)}``.
        """
        out = {}
        for pid, p in self.providers.items():
            out[pid] = (p.share * self.state.x, p.share * self.state.y, p.fees_accrued)
            p.fees_accrued = 0.0
        self.state = PoolState(0.0, 0.0)
        self.halted = True
        return out
