import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perishable_amm.curve import Bounds
from perishable_amm.errors import (
    BookFrozenError,
    DomainError,
    LockedOrderError,
    MarketClosedError,
    OwnershipError,
    PrematureSnapshotError,
)
from perishable_amm.orders import OrderBook, largest_remainder
from perishable_amm.pool import EpochSchedule, Pool

NEXT_UNIT = 2.0408163265306123  # 5000/49 - 100, exact fraction oracle


def setup(fee_rate=0.0, x=100.0, y=50.0):
    sched = EpochSchedule.uniform(2, 10)
    pool = Pool.open(x, y, 1.0, "lp0", Bounds(0.5, 4.0), sched, fee_rate=fee_rate)
    return pool, OrderBook(sched.clearing_time)


def test_bid_below_market_rests():
    pool, book = setup()
    book.submit_bid("u", 1.5, now=1)
    assert book.match_against_amm(pool) == []
    assert len(book.bids) == 1 and book.open_escrow() == 1.5


def test_crossing_bid_fills_at_pool_price():
    pool, book = setup()
    book.submit_bid("u", 3.0, now=1)
    (fill,) = book.match_against_amm(pool)
    assert fill.payment == pytest.approx(NEXT_UNIT, rel=1e-12)
    assert fill.refund == pytest.approx(3.0 - NEXT_UNIT, rel=1e-12)
    assert book.bids == [] and pool.state.y == 49


def test_high_bid_executes_immediately():
    pool, book = setup()
    book.submit_bid("u", 10.0, now=0)
    fills = book.match_against_amm(pool)
    assert len(fills) == 1 and fills[0].payment == pytest.approx(NEXT_UNIT)


def test_fill_includes_fee_and_stays_under_bid():
    pool, book = setup(fee_rate=0.003)
    book.submit_bid("u", 2.05, now=0)
    (fill,) = book.match_against_amm(pool)
    assert fill.payment == pytest.approx(NEXT_UNIT * 1.003)
    assert fill.payment <= 2.05


def test_bid_at_or_after_clearing_is_rejected():
    _, book = setup()
    with pytest.raises(MarketClosedError):
        book.submit_bid("u", 3.0, now=book.clearing_time)


@pytest.mark.parametrize("price", [0.0, -1.0])
def test_nonpositive_bid_rejected(price):
    _, book = setup()
    with pytest.raises(DomainError):
        book.submit_bid("u", price, now=0)


def test_raise_rules():
    _, book = setup()
    bid_id = book.submit_bid("u", 3.0, now=0)
    bid, added = book.raise_bid(bid_id, 4.0)
    assert bid.escrow == 4.0 and added == 1.0
    with pytest.raises(LockedOrderError):
        book.raise_bid(bid_id, 4.0)
    with pytest.raises(LockedOrderError):
        book.lower_bid(bid_id, 2.0)
    with pytest.raises(LockedOrderError):
        book.withdraw_bid(bid_id)


def test_raise_into_the_market_fills_at_pool_price():
    pool, book = setup()
    bid_id = book.submit_bid("u", 1.0, now=0)
    assert book.match_against_amm(pool) == []
    book.raise_bid(bid_id, 5.0)
    (fill,) = book.match_against_amm(pool)
    assert fill.payment == pytest.approx(NEXT_UNIT)
    assert fill.refund == pytest.approx(5.0 - NEXT_UNIT)


def test_equal_bids_fill_in_submission_order():
    # the pool price moves past 3.0 after a single unit
    pool, book = setup(x=100.0, y=3.0)
    first = book.submit_bid("early", 80.0, now=0)
    book.submit_bid("late", 80.0, now=1)
    fills = book.match_against_amm(pool)
    assert [f.bid_id for f in fills] == [first]
    assert pool.buy_quote(1)[0] > 80.0


def test_listings_and_ownership():
    pool, book = setup(x=100.0, y=2.0)
    u1, u2 = book.allocate_units(pool)
    book.set_unit_ask("lp0", u1.unit_id, 3.0)
    book.set_unit_ask("lp0", u2.unit_id, 5.0)
    assert [u.ask for u in book.listings] == [5.0, 3.0]
    assert book.set_unit_ask("lp0", u1.unit_id, 0.0).ask == 0.0
    with pytest.raises(OwnershipError):
        book.set_unit_ask("mallory", u1.unit_id, 1.0)


def test_largest_remainder_examples():
    assert largest_remainder({"a": 0.6, "b": 0.4}, 10) == {"a": 6, "b": 4}
    assert largest_remainder({"a": 0.5, "b": 0.5}, 5) == {"a": 3, "b": 2}
    assert largest_remainder({"b": 0.5, "a": 0.5}, 5) == {"a": 3, "b": 2}


def test_snapshot_rules():
    pool, book = setup()
    with pytest.raises(PrematureSnapshotError):
        book.snapshot_for_clearing(pool, now=book.clearing_time - 1)
    units, bids = book.snapshot_for_clearing(pool, now=book.clearing_time)
    assert len(units) == 50 and bids == []
    with pytest.raises(BookFrozenError):
        book.submit_bid("u", 1.0, now=0)


@settings(max_examples=200)
@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.floats(0.01, 1.0), min_size=1, max_size=6),
       st.integers(0, 500))
def test_largest_remainder_hands_out_exactly_total(raw, total):
    s = sum(raw.values())
    shares = {k: v / s for k, v in raw.items()}
    counts = largest_remainder(shares, total)
    assert sum(counts.values()) == total
    for pid, n in counts.items():
        assert abs(n - shares[pid] * total) < 1 + 1e-9


book_ops = st.lists(
    st.tuples(st.sampled_from(["bid", "raise", "buy", "sell"]), st.floats(0.1, 20.0), st.integers(0, 20)),
    max_size=40,
)


@settings(max_examples=150, deadline=None)
@given(book_ops)
def test_book_invariants_under_random_flow(seq):
    pool, book = setup(fee_rate=0.003)
    held = 0
    for op, price, k in seq:
        if op == "bid":
            book.submit_bid("u", price, now=1)
        elif op == "raise" and book.bids:
            bid = book.bids[k % len(book.bids)]
            book.raise_bid(bid.id, bid.price + price)
        elif op == "buy" and pool.state.y > 2:
            pool.buy_units(1)
            held += 1
        elif op == "sell" and held:
            pool.sell_units(1)
            held -= 1
        for f in book.match_against_amm(pool):
            assert f.payment <= f.bid_price * (1 + 1e-12)
        # nothing left in the book crosses the pool
        if book.bids and pool.state.y > 1:
            cost, fee = pool.buy_quote(1)
            assert book.bids[0].price < cost + fee
        total = math.fsum([book.open_escrow(), book.escrow_refunded, book.escrow_paid])
        assert total == pytest.approx(book.escrow_submitted, abs=1e-9)
    for history in book.price_history.values():
        assert all(b > a for a, b in zip(history, history[1:]))
