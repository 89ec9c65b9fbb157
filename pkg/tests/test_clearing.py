import itertools
import math
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perishable_amm.clearing import (
    build_auction_graph,
    clear_market,
    dutch_auction,
    exact_max_weight_matching,
    greedy_matching,
    residual_clearing,
    residual_edges,
    settle_matching,
)
from perishable_amm.errors import DoubleSettlementError, SizeLimitError
from perishable_amm.orders import Bid, UnitListing


def units(*asks, owner="A"):
    owners = owner if isinstance(owner, (list, tuple)) else [owner] * len(asks)
    return [UnitListing(f"u{i}", o, float(a)) for i, (a, o) in enumerate(zip(asks, owners))]


def bids(*prices):
    return [Bid(f"b{i}", f"user{i}", float(p), float(p), submitted_at=i, seq=i) for i, p in enumerate(prices)]


def brute_force_weight(U, B):
    """Best matching by trying every injection of units into bids or nothing."""
    best = 0.0
    slots = list(range(len(B))) + [None] * len(U)
    for assign in itertools.permutations(slots, len(U)):
        used = [j for j in assign if j is not None]
        if len(used) != len(set(used)):
            continue
        w = 0.0
        ok = True
        for u, j in zip(U, assign):
            if j is None:
                continue
            if u.ask > B[j].price:
                ok = False
                break
            w += u.ask
        if ok:
            best = max(best, w)
    return best


# Dutch auction

def test_dutch_three_units():
    res = dutch_auction(3, bids(7, 5, 2), {"p": 0.6, "q": 0.4})
    assert [f.price for f in res.fills] == [7, 5, 2]
    assert res.payouts == pytest.approx({"p": 8.4, "q": 5.6})
    assert math.fsum(res.payouts.values()) == pytest.approx(14.0)


def test_dutch_supply_runs_out():
    res = dutch_auction(1, bids(7, 5), {"p": 1.0})
    assert [f.price for f in res.fills] == [7]
    assert res.refunds["b1"] == 5.0


def test_dutch_floor_refunds_everything():
    res = dutch_auction(5, bids(2, 1), {"p": 1.0}, floor=3)
    assert res.fills == []
    assert res.refunds == {"b0": 2.0, "b1": 1.0}


def test_dutch_ties_go_to_earlier_bid():
    res = dutch_auction(1, bids(4, 4), {"p": 1.0})
    assert res.fills[0].bid_id == "b0"


# graph and greedy

def test_graph_examples():
    g = build_auction_graph(units(5, 3), bids(6, 4))
    assert {(e[2], next(b.price for b in g.bids if b.id == e[1])) for e in g.edges} == {(5, 6), (3, 6), (3, 4)}
    assert build_auction_graph(units(9, 8), bids(2, 1)).edge_count == 0
    assert build_auction_graph(units(4), bids(4)).edge_count == 1


def test_greedy_examples():
    m = greedy_matching(units(5, 3), bids(6, 4))
    assert [(p.settle_price) for p in m.pairs] == [5, 3] and m.weight == 8
    m = greedy_matching(units(5, 3), bids(4))
    assert [(p.unit_id, p.bid_id, p.settle_price) for p in m.pairs] == [("u1", "b0", 3)]
    assert [u.ask for u in m.unmatched_units] == [5]
    m = greedy_matching(units(5, 3), [])
    assert m.pairs == [] and len(m.unmatched_units) == 2


def test_greedy_ties_by_least_id():
    m = greedy_matching(units(3, 3), bids(3))
    assert m.pairs[0].unit_id == "u0"


def test_exact_examples():
    assert exact_max_weight_matching(build_auction_graph(units(5, 3), bids(6, 4))).weight == 8
    assert exact_max_weight_matching(build_auction_graph(units(9), bids(1))).weight == 0
    assert exact_max_weight_matching(build_auction_graph(units(5), bids(6, 4))).weight == 5


def test_exhaustive_size_limit():
    g = build_auction_graph(units(*range(9)), bids(*range(8)))
    with pytest.raises(SizeLimitError):
        exact_max_weight_matching(g)
    assert exact_max_weight_matching(g, "hungarian").weight > 0


# settlement and residual

def test_settle_examples():
    U, B = units(3), bids(4)
    ledger = settle_matching(greedy_matching(U, B), U, B)
    assert ledger.payouts == {"A": 3.0} and ledger.refunds == {"b0": 1.0}
    U, B = units(3, 2), bids(4, 5)
    ledger = settle_matching(greedy_matching(U, B), U, B)
    assert ledger.payouts == {"A": 5.0}
    empty = greedy_matching([], [])
    assert settle_matching(empty, [], []).fills == []


def test_double_settlement():
    U, B = units(3), bids(4)
    m = greedy_matching(U, B)
    done = set()
    settle_matching(m, U, B, done)
    with pytest.raises(DoubleSettlementError):
        settle_matching(m, U, B, done)


def test_residual_examples():
    res = residual_clearing(units(9), bids(2), {"A": 1.0})
    assert [f.price for f in res.fills] == [0.0] and res.unsold_units == []
    assert residual_clearing(units(9), [], {"A": 1.0}).fills == []
    res = residual_clearing(units(1), bids(2), {"A": 0.5, "B": 0.5}, floor=0.5)
    assert res.fills[0].price == 0.5 and res.payouts == {"A": 0.25, "B": 0.25}


def test_clear_market_leaves_nothing_crossing():
    U = units(9, 5, 3, 1, owner=["A", "B", "A", "B"])
    B = bids(10, 4, 2, 2, 0.5)
    for mech in ("matching", "dutch"):
        rep = clear_market(U, B, {"A": 0.5, "B": 0.5}, mech, oracle=True)
        assert rep.crossing_pairs() == []
    assert rep.as_record()["mechanism"] == "dutch"


def test_duck_typed_inputs():
    U = [SimpleNamespace(unit_id="x", owner="o", ask=1.0)]
    B = [SimpleNamespace(id="y", price=2.0)]
    assert greedy_matching(U, B).weight == 1.0


# properties

book = st.tuples(
    st.lists(st.integers(1, 20), max_size=6),
    st.lists(st.integers(1, 20), max_size=6),
)


@settings(max_examples=300, deadline=None)
@given(book)
def test_greedy_half_bound_maximality_and_work(data):
    asks, prices = data
    U, B = units(*asks), bids(*prices)
    m = greedy_matching(U, B)
    m.validate(U, B)
    exact = exact_max_weight_matching(build_auction_graph(U, B))
    assert m.weight >= 0.5 * exact.weight
    assert residual_edges(m) == []
    assert m.iterations <= len(U) + len(B)


@settings(max_examples=150, deadline=None)
@given(book)
def test_exact_methods_agree_with_brute_force(data):
    asks, prices = data
    U, B = units(*asks[:5]), bids(*prices[:5])
    g = build_auction_graph(U, B)
    truth = brute_force_weight(g.units, g.bids)
    for method in ("exhaustive", "hungarian"):
        m = exact_max_weight_matching(g, method)
        m.validate(U, B)
        assert m.weight == pytest.approx(truth)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10), st.lists(st.floats(0.0, 50.0), max_size=12), st.floats(0.0, 10.0),
       st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4))
def test_dutch_properties(n, prices, floor, raw_shares):
    total = sum(raw_shares)
    shares = {f"p{i}": s / total for i, s in enumerate(raw_shares)}
    B = bids(*prices)
    res = dutch_auction(n, B, shares, floor)
    fill_prices = [f.price for f in res.fills]
    assert all(a >= b for a, b in zip(fill_prices, fill_prices[1:]))
    revenue = math.fsum(fill_prices)
    for pid, s in shares.items():
        assert abs(res.payouts[pid] - s * revenue) <= 1e-9 * max(1.0, revenue)
    for b in B:
        if b.price < floor:
            assert res.refunds[b.id] == b.escrow


@settings(max_examples=200, deadline=None)
@given(book, st.floats(0.0, 5.0), st.sampled_from(["matching", "dutch"]))
def test_full_pipeline_clears_and_is_rational(data, floor, mech):
    asks, prices = data
    U, B = units(*asks, owner=["A", "B"] * 3), bids(*prices)
    rep = clear_market(U, B, {"A": 0.5, "B": 0.5}, mech, floor=floor)
    assert rep.crossing_pairs() == []
    price = {b.id: b.price for b in B}
    ask = {u.unit_id: u.ask for u in U}
    for f in rep.fills + rep.residual_fills:
        assert f.price <= price[f.bid_id] + 1e-12
    if mech == "matching":
        for f in rep.fills:
            assert f.price >= ask[f.unit_id]


def test_dutch_bid_below_floor_is_not_a_crossing():
    rep = clear_market(units(1), bids(1), {"A": 1.0}, "dutch", floor=2.0)
    assert rep.unsold_units and rep.unfilled_bids
    assert rep.crossing_pairs() == []
