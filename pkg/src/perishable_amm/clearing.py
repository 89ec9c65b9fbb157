"""End-of-life market clearing.

Two mechanisms sell the units left in the pool to the resting bids just
before retrieval:

* a uniform Dutch auction that walks bids from the highest price down and
  splits every sale among providers by share, and
* the auction-graph mechanism: an edge joins unit ``u`` and bid ``b`` iff
  ``ask(u) <= price(b)`` with weight ``ask(u)``; a greedy matching (at least
  half the optimum weight, linear work on sorted inputs) decides who trades,
  each sale pays the unit's owner its ask, and a residual pass clears what
  is left at the floor price.

Units and bids are duck-typed: units need ``unit_id``, ``owner`` and
``ask``; bids need ``id``, ``price`` and optionally ``escrow`` and
``submitted_at``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, DoubleSettlementError, SizeLimitError

EXHAUSTIVE_LIMIT = 16


def _escrow(bid):
    return getattr(bid, "escrow", bid.price)


def _bid_key(bid):
    # highest price first, then earliest submission, then least id
    return (-bid.price, getattr(bid, "submitted_at", 0), bid.id)


def _unit_key(unit):
    return (-unit.ask, unit.unit_id)


@dataclass(frozen=True)
class ClearingFill:
    unit_id: str
    bid_id: str
    price: float
    payee: str
    refund: float


@dataclass
class DutchResult:
    fills: list
    payouts: dict
    unfilled: list
    refunds: dict

    @property
    def revenue(self):
        return math.fsum(f.price for f in self.fills)


def dutch_auction(units, bids, shares, floor=0.0) -> DutchResult:
    """Uniform Dutch auction over the pooled units.

    ``units`` is either a unit count or a sequence of listings (their asks
    are ignored). Each sale at price ``p`` pays every provider ``s * p``.
    """
    if floor < 0:
        raise DomainError("floor must be nonnegative")
    if isinstance(units, int):
        unit_ids = [f"u{i + 1:06d}" for i in range(units)]
    else:
        unit_ids = [u.unit_id for u in units]
    queue = sorted(bids, key=_bid_key)
    payouts = {pid: 0.0 for pid in shares}
    fills = []
    i = 0
    while i < len(queue) and len(fills) < len(unit_ids) and queue[i].price >= floor:
        b = queue[i]
        fills.append(ClearingFill(unit_ids[len(fills)], b.id, b.price, "pro-rata", _escrow(b) - b.price))
        for pid, s in shares.items():
            payouts[pid] += s * b.price
        i += 1
    unfilled = queue[i:]
    refunds = {f.bid_id: f.refund for f in fills}
    refunds.update({b.id: _escrow(b) for b in unfilled})
    return DutchResult(fills, payouts, unfilled, refunds)


@dataclass
class AuctionGraph:
    units: list
    bids: list

    def __post_init__(self):
        self.units = sorted(self.units, key=_unit_key)
        self.bids = sorted(self.bids, key=_bid_key)

    def has_edge(self, unit, bid):
        return unit.ask <= bid.price

    @property
    def edges(self):
        return [(u.unit_id, b.id, u.ask) for u in self.units for b in self.bids if u.ask <= b.price]

    @property
    def edge_count(self):
        return len(self.edges)


def build_auction_graph(units, bids) -> AuctionGraph:
    return AuctionGraph(list(units), list(bids))


@dataclass(frozen=True)
class Pair:
    unit_id: str
    bid_id: str
    settle_price: float


@dataclass
class Matching:
    pairs: list = field(default_factory=list)
    iterations: int = 0
    unmatched_units: list = field(default_factory=list)
    unmatched_bids: list = field(default_factory=list)

    @property
    def weight(self):
        return math.fsum(p.settle_price for p in self.pairs)

    def validate(self, units, bids):
        """Raise if a unit or bid repeats or a pair violates ``ask <= price``."""
        ask = {u.unit_id: u.ask for u in units}
        price = {b.id: b.price for b in bids}
        seen_u, seen_b = set(), set()
        for p in self.pairs:
            if p.unit_id in seen_u or p.bid_id in seen_b:
                raise DomainError(f"pair {p} reuses a vertex")
            if not ask[p.unit_id] <= price[p.bid_id]:
                raise DomainError(f"pair {p} is not an edge")
            seen_u.add(p.unit_id)
            seen_b.add(p.bid_id)


def greedy_matching(units, bids) -> Matching:
    """Greedy maximal matching on the auction graph.

    Repeatedly takes the most expensive remaining unit and the highest
    remaining bid. If the bid covers the ask they are matched; otherwise the
    unit is set aside (no remaining bid can afford it). Stops as soon as the
    cheapest remaining unit is above the highest remaining bid. Set-aside
    units are returned to the unmatched pool afterwards.

    ``Matching.iterations`` counts loop passes; it never exceeds
    ``len(units) + len(bids)``.
    """
    U = sorted(units, key=_unit_key)
    B = sorted(bids, key=_bid_key)
    pairs, skipped = [], []
    i = j = 0
    iterations = 0
    # the graph still has an edge iff the cheapest unit is affordable to the top bid
    while i < len(U) and j < len(B) and U[-1].ask <= B[j].price:
        iterations += 1
        u, b = U[i], B[j]
        if u.ask <= b.price:
            pairs.append(Pair(u.unit_id, b.id, u.ask))
            j += 1
        else:
            skipped.append(u)
        i += 1
    leftover = sorted(skipped + U[i:], key=_unit_key)
    return Matching(pairs, iterations, leftover, B[j:])


def residual_edges(matching: Matching):
    """Edges of the auction graph between still-unmatched units and bids."""
    return [
        (u.unit_id, b.id)
        for u in matching.unmatched_units
        for b in matching.unmatched_bids
        if u.ask <= b.price
    ]


def _finish(units, bids, chosen, iterations=0):
    used_u = {p.unit_id for p in chosen}
    used_b = {p.bid_id for p in chosen}
    return Matching(
        list(chosen),
        iterations,
        [u for u in units if u.unit_id not in used_u],
        [b for b in bids if b.id not in used_b],
    )


def _exhaustive(graph):
    U, B = graph.units, graph.bids
    nb = len(B)
    size = 1 << nb
    masks = np.arange(size)
    dp = np.full(size, -np.inf)
    dp[0] = 0.0
    stages = [dp]
    # dp over used-bid subsets; stage i covers units[:i], so every matching is scored
    for u in U:
        new = dp.copy()
        for jb, b in enumerate(B):
            if u.ask <= b.price:
                bit = 1 << jb
                free = masks[(masks & bit) == 0]
                cand = dp[free] + u.ask
                tgt = free | bit
                np.maximum(new[tgt], cand, out=cand)
                new[tgt] = cand
        dp = new
        stages.append(dp)
    mask = int(np.argmax(dp))
    chosen = []
    for i in range(len(U), 0, -1):
        cur, prev = stages[i][mask], stages[i - 1][mask]
        if cur == prev:
            continue
        u = U[i - 1]
        for jb, b in enumerate(B):
            bit = 1 << jb
            if mask & bit and u.ask <= b.price and stages[i - 1][mask ^ bit] + u.ask == cur:
                chosen.append(Pair(u.unit_id, b.id, u.ask))
                mask ^= bit
                break
        else:  # pragma: no cover - backtracking always finds the stored transition
            raise RuntimeError("inconsistent matching table")
    chosen.reverse()
    return chosen


def _hungarian(graph):
    U, B = graph.units, graph.bids
    if not U or not B:
        return []
    ask = np.array([u.ask for u in U])
    price = np.array([b.price for b in B])
    edge = ask[:, None] <= price[None, :]
    weight = np.where(edge, ask[:, None], 0.0)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    return [Pair(U[r].unit_id, B[c].id, U[r].ask) for r, c in zip(rows, cols) if edge[r, c]]


def exact_max_weight_matching(graph: AuctionGraph, method="exhaustive", limit=EXHAUSTIVE_LIMIT) -> Matching:
    """Maximum-weight matching of the auction graph.

    ``method="exhaustive"`` scores every matching through a table indexed by
    the subset of bids already used and is capped at ``limit`` vertices.
    ``method="hungarian"`` solves the equivalent assignment problem and
    handles any size.
    """
    if method == "exhaustive":
        if len(graph.units) + len(graph.bids) > limit:
            raise SizeLimitError(
                f"exhaustive matching capped at {limit} vertices, got {len(graph.units) + len(graph.bids)}"
            )
        chosen = _exhaustive(graph)
    elif method == "hungarian":
        chosen = _hungarian(graph)
    else:
        raise DomainError(f"unknown method {method!r}; use 'exhaustive' or 'hungarian'")
    return _finish(graph.units, graph.bids, chosen)


@dataclass
class SettlementLedger:
    fills: list = field(default_factory=list)
    payouts: dict = field(default_factory=lambda: defaultdict(float))
    refunds: dict = field(default_factory=dict)


def settle_matching(matching: Matching, units, bids, settled=None) -> SettlementLedger:
    """Sell each matched unit to its bid at the unit's ask, paying the owner.

    ``settled`` is an optional set of already-settled unit and bid ids that
    is updated in place; settling any of them again raises.
    """
    settled = set() if settled is None else settled
    by_unit = {u.unit_id: u for u in units}
    by_bid = {b.id: b for b in bids}
    matching.validate(units, bids)
    for p in matching.pairs:
        if ("unit", p.unit_id) in settled or ("bid", p.bid_id) in settled:
            raise DoubleSettlementError(f"pair ({p.unit_id}, {p.bid_id}) already settled")
    ledger = SettlementLedger()
    for p in matching.pairs:
        u, b = by_unit[p.unit_id], by_bid[p.bid_id]
        refund = _escrow(b) - u.ask
        ledger.fills.append(ClearingFill(u.unit_id, b.id, u.ask, u.owner, refund))
        ledger.payouts[u.owner] += u.ask
        ledger.refunds[b.id] = refund
        settled.add(("unit", p.unit_id))
        settled.add(("bid", p.bid_id))
    ledger.payouts = dict(ledger.payouts)
    return ledger


@dataclass
class ResidualResult:
    fills: list
    payouts: dict
    unsold_units: list
    unfilled_bids: list


def residual_clearing(units, bids, shares, floor=0.0) -> ResidualResult:
    """Clear leftovers at any price: each remaining bid at or above ``floor``
    takes a remaining unit at ``floor``; proceeds are split by share."""
    if floor < 0:
        raise DomainError("floor must be nonnegative")
    queue = sorted(bids, key=_bid_key)
    stock = list(units)
    payouts = {pid: 0.0 for pid in shares}
    fills = []
    unfilled = []
    for b in queue:
        if stock and b.price >= floor:
            u = stock.pop(0)
            fills.append(ClearingFill(u.unit_id, b.id, floor, "pro-rata", _escrow(b) - floor))
            for pid, s in shares.items():
                payouts[pid] += s * floor
        else:
            unfilled.append(b)
    return ResidualResult(fills, payouts, stock, unfilled)


@dataclass
class ClearingReport:
    mechanism: str
    fills: list
    residual_fills: list
    payouts: dict
    refunds: dict
    unsold_units: list
    unfilled_bids: list
    greedy_weight: float | None = None
    exact_weight: float | None = None
    iterations: int | None = None
    floor: float = 0.0

    def crossing_pairs(self):
        """Remaining (unit, bid) pairs a seller and buyer would both accept.

        In a Dutch auction every unit is offered at the floor, whatever its
        listed ask.
        """
        def ask(u):
            return self.floor if self.mechanism == "dutch" else u.ask

        return [
            (u.unit_id, b.id)
            for u in self.unsold_units
            for b in self.unfilled_bids
            if ask(u) <= b.price
        ]

    def as_record(self):
        def fill(f):
            return {"unit": f.unit_id, "bid": f.bid_id, "price": f.price, "payee": f.payee}

        return {
            "mechanism": self.mechanism,
            "fills": [fill(f) for f in self.fills],
            "residual_fills": [fill(f) for f in self.residual_fills],
            "refunds": dict(self.refunds),
            "greedy_weight": self.greedy_weight,
            "exact_weight": self.exact_weight,
        }


def clear_market(units, bids, shares, mechanism="matching", floor=0.0, oracle=False) -> ClearingReport:
    """Run the selected mechanism followed by one residual pass."""
    units, bids = list(units), list(bids)
    refunds = {}
    payouts = defaultdict(float)
    greedy_w = exact_w = iterations = None
    if mechanism == "dutch":
        res = dutch_auction(units, bids, shares, floor)
        fills = res.fills
        for pid, v in res.payouts.items():
            payouts[pid] += v
        sold = {f.unit_id for f in fills}
        rest_units = [u for u in units if u.unit_id not in sold]
        rest_bids = res.unfilled
    elif mechanism == "matching":
        m = greedy_matching(units, bids)
        greedy_w, iterations = m.weight, m.iterations
        if oracle:
            graph = build_auction_graph(units, bids)
            method = "exhaustive" if len(units) + len(bids) <= EXHAUSTIVE_LIMIT else "hungarian"
            exact_w = exact_max_weight_matching(graph, method).weight
        ledger = settle_matching(m, units, bids)
        fills = ledger.fills
        for pid, v in ledger.payouts.items():
            payouts[pid] += v
        rest_units, rest_bids = m.unmatched_units, m.unmatched_bids
    else:
        raise DomainError(f"unknown clearing mechanism {mechanism!r}; use 'dutch' or 'matching'")
    for f in fills:
        refunds[f.bid_id] = f.refund
    residual = residual_clearing(rest_units, rest_bids, shares, floor)
    for f in residual.fills:
        refunds[f.bid_id] = f.refund
    for pid, v in residual.payouts.items():
        payouts[pid] += v
    for b in residual.unfilled_bids:
        refunds[b.id] = _escrow(b)
    return ClearingReport(
        mechanism,
        fills,
        residual.fills,
        dict(payouts),
        refunds,
        residual.unsold_units,
        residual.unfilled_bids,
        greedy_w,
        exact_w,
        iterations,
        floor,
    )
