"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the "acceptance criteria" section of the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from perishable_amm.beliefs import (
    BeliefModel,
    ProfitFunction,
    density_transform_check,
    honesty_experiment,
    misreport_aggregate,
    sample_aggregate,
)
from perishable_amm.clearing import build_auction_graph, dutch_auction, exact_max_weight_matching, greedy_matching, residual_edges
from perishable_amm.curve import CurveParams, GridSpec, PoolState, check_amm_axioms, evaluate, slippage, spot_price, surface
from perishable_amm.loss import LossSnapshot, divergence_loss, dl_sensitivity, min_profit, min_profit_exhaustive
from perishable_amm.orders import Bid, UnitListing
from perishable_amm.pool import LiquidityProvider, aggregate_constant
from perishable_amm.sim import generate_scenario, run, verify_run

pytestmark = pytest.mark.slow


def log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


def test_criterion_01_amm_axioms(record_criterion):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst, all_ok = 0.0, True
    for c in rng.uniform(0.5, 4.0, 20):
        x0, y0 = rng.uniform(1, 200, 2)
        rep = check_amm_axioms(CurveParams(float(c), float(x0), float(y0)), GridSpec(1.0, 200.0, points=100), 1e-8)
        worst = max(worst, rep.worst_violation)
        all_ok &= rep.ok
    elapsed = time.perf_counter() - start
    ok = all_ok and worst <= 1e-8 and elapsed < 10
    record_criterion(1, ok, f"20 exponents, worst violation {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_state_space_equivalence(record_criterion):
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(10_000):
        c = rng.uniform(0.1, 8.0)
        x0, y0 = log_uniform(rng, 1e-2, 1e4, 2)
        x = x0 * log_uniform(rng, 1e-2, 1e2)
        p = CurveParams(float(c), float(x0), float(y0))
        worst = max(worst, abs(surface(p, float(x), evaluate(p, float(x)))) / p.k)
    ok = worst <= 1e-9
    record_criterion(2, ok, f"1e4 points, worst relative residual {worst:.2e}")
    assert ok


def test_criterion_03_price_and_slippage(record_criterion):
    rng = np.random.default_rng(103)
    ordered = True
    worst_formula = worst_price_fd = worst_slip_fd = 0.0
    for _ in range(1000):
        c2, c1 = sorted(rng.uniform(0.1, 6.0, 2))
        if c1 == c2:
            continue
        x0, y0 = (float(v) for v in log_uniform(rng, 1e-1, 1e3, 2))
        hi, lo = CurveParams(float(c1), x0, y0), CurveParams(float(c2), x0, y0)
        ordered &= spot_price(hi, x0) > spot_price(lo, x0) and slippage(hi, x0) > slippage(lo, x0)
        for p in (hi, lo):
            price = spot_price(p, x0)
            worst_formula = max(worst_formula, abs(price - p.c * y0 / x0) / price)
            h = 1e-6 * x0
            fd = -(evaluate(p, x0 + h) - evaluate(p, x0 - h)) / (2 * h)
            worst_price_fd = max(worst_price_fd, abs(fd - price) / price)
            h2 = 1e-4 * x0
            fd2 = (evaluate(p, x0 + h2) - 2 * evaluate(p, x0) + evaluate(p, x0 - h2)) / h2**2
            worst_slip_fd = max(worst_slip_fd, abs(fd2 - slippage(p, x0)) / slippage(p, x0))
    ok = ordered and worst_formula <= 1e-12 and worst_price_fd <= 1e-6 and worst_slip_fd <= 1e-6
    record_criterion(3, ok, f"1e3 pairs ordered={ordered}, closed form {worst_formula:.1e}, "
                            f"price FD {worst_price_fd:.1e}, slippage FD {worst_slip_fd:.1e}")
    assert ok


def _random_book(rng, max_size=8):
    nu, nb = rng.integers(0, max_size + 1, 2)
    units = [UnitListing(f"u{i}", "lp", float(p)) for i, p in enumerate(rng.integers(1, 21, nu))]
    bids = [Bid(f"b{i}", "user", float(p), float(p), 0, seq=i) for i, p in enumerate(rng.integers(1, 21, nb))]
    return units, bids


@pytest.fixture(scope="module")
def greedy_sweep():
    rng = np.random.default_rng(104)
    start = time.perf_counter()
    worst_ratio, maximal, bound, max_slack = 1.0, True, True, None
    for _ in range(10_000):
        units, bids = _random_book(rng)
        m = greedy_matching(units, bids)
        exact = exact_max_weight_matching(build_auction_graph(units, bids), "exhaustive").weight
        if exact > 0:
            worst_ratio = min(worst_ratio, m.weight / exact)
        elif m.weight != 0:
            worst_ratio = 0.0
        maximal &= not residual_edges(m)
        bound &= m.iterations <= len(units) + len(bids)
        slack = len(units) + len(bids) - m.iterations
        max_slack = slack if max_slack is None else min(max_slack, slack)
    return worst_ratio, maximal, bound, max_slack, time.perf_counter() - start


def test_criterion_04_greedy_half_approximation(record_criterion, greedy_sweep):
    worst_ratio, maximal, _, _, elapsed = greedy_sweep
    ok = worst_ratio >= 0.5 and maximal and elapsed < 60
    record_criterion(4, ok, f"1e4 books, min greedy/exact {worst_ratio:.3f}, maximal={maximal}, {elapsed:.1f}s")
    assert ok


def test_criterion_05_greedy_work_bound(record_criterion, greedy_sweep):
    _, _, bound, slack, _ = greedy_sweep
    record_criterion(5, bound, f"iterations <= |U|+|B| on all 1e4 books (smallest slack {slack})")
    assert bound


def test_criterion_06_dutch_auction(record_criterion):
    rng = np.random.default_rng(106)
    ordered = ledger = refunds = True
    worst = 0.0
    for _ in range(1000):
        n_units = int(rng.integers(0, 15))
        prices = rng.uniform(0, 30, int(rng.integers(0, 20)))
        bids = [Bid(f"b{i:02d}", "u", float(p), float(p) + float(rng.uniform(0, 2)), int(rng.integers(0, 9)), seq=i)
                for i, p in enumerate(prices)]
        raw = rng.uniform(0.01, 1, int(rng.integers(1, 6)))
        shares = {f"p{i}": float(s) for i, s in enumerate(raw / raw.sum())}
        floor = float(rng.choice([0.0, rng.uniform(0, 15)]))
        res = dutch_auction(n_units, bids, shares, floor)
        fp = [f.price for f in res.fills]
        ordered &= all(a >= b for a, b in zip(fp, fp[1:]))
        total = math.fsum(fp)
        for pid, s in shares.items():
            err = abs(res.payouts[pid] - s * total)
            worst = max(worst, err)
            ledger &= err <= 1e-9
        for b in bids:
            if b.price < floor:
                refunds &= res.refunds[b.id] == b.escrow
    ok = ordered and ledger and refunds
    record_criterion(6, ok, f"1e3 books, nonincreasing={ordered}, worst payout error {worst:.1e}, floor refunds intact={refunds}")
    assert ok


def _fd_sensitivity(share, c_own, others, state, h=1e-2):
    snap = LossSnapshot(share, 1.0, 1.0, 1.0)

    def dl(c):
        return divergence_loss(snap, share, state, aggregate_constant([LiquidityProvider("own", share, c)] + others))

    d = h * c_own
    return (dl(c_own - 2 * d) - 8 * dl(c_own - d) + 8 * dl(c_own + d) - dl(c_own + 2 * d)) / (12 * d)


def test_criterion_07_dl_sensitivity(record_criterion):
    rng = np.random.default_rng(107)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 6))
        raw = rng.uniform(0.05, 1.0, n)
        shares = raw / raw.sum()
        consts = rng.uniform(0.5, 4.0, n)
        others = [LiquidityProvider(f"o{i}", float(s), float(c)) for i, (s, c) in enumerate(zip(shares[1:], consts[1:]))]
        x = float(log_uniform(rng, 10, 1e4))
        state = PoolState(x, x * float(log_uniform(rng, 1e-2, 10)))
        share, c_own = float(shares[0]), float(consts[0])
        c = aggregate_constant([LiquidityProvider("own", share, c_own)] + others)
        exact = dl_sensitivity(share, c_own, c, state)
        worst = max(worst, abs(_fd_sensitivity(share, c_own, others, state) - exact) / exact)
    ok = worst <= 1e-5
    record_criterion(7, ok, f"1e3 configurations, worst relative error {worst:.1e}")
    assert ok


def test_criterion_08_min_profit(record_criterion):
    rng = np.random.default_rng(108)
    example = min_profit(10, 2, [5, 3, 4]) == 17 == min_profit_exhaustive(10, 2, [5, 3, 4])
    mismatches = 0
    for _ in range(1000):
        orders = [float(p) for p in rng.integers(1, 25, int(rng.integers(0, 13)))]
        x = float(rng.uniform(0, 100))
        y = float(rng.uniform(0, 14))
        if min_profit(x, y, orders) != min_profit_exhaustive(x, y, orders):
            mismatches += 1
    ok = example and mismatches == 0
    record_criterion(8, ok, f"1e3 order sets |O|<=12, {mismatches} mismatches, worked example 17={example}")
    assert ok


def test_criterion_09_beliefs(record_criterion):
    start = time.perf_counter()
    model = BeliefModel(2.0, (0.5, 0.3, 0.2), sigma=0.25, seed=109)
    identity = True
    for idx, a in ((0, 2.0), (1, 0.5), (2, 3.7)):
        honest = sample_aggregate(model, 100_000).samples
        d = misreport_aggregate(model, idx, a, 100_000).samples
        identity &= bool(np.array_equal(d, a ** model.shares[idx] * honest))
    coupled = density_transform_check(model, 0, 2.0, bins=64, replicas=10**6).discrepancy
    independent = density_transform_check(model, 0, 2.0, bins=64, replicas=10**6, coupled=False).discrepancy
    rows = honesty_experiment(model, ProfitFunction.peaked(2.0), 0, [0.5, 2.0], 100_000)
    flags = all(r.flag for r in rows)
    elapsed = time.perf_counter() - start
    ok = identity and coupled <= 0.01 and independent <= 0.01 and flags and elapsed < 120
    record_criterion(9, ok, f"bit-exact={identity}, density {coupled:.1e} coupled / {independent:.1e} independent, "
                            f"honesty flags a=0.5,2: {flags}, {elapsed:.1f}s")
    assert ok


def test_criterion_10_end_to_end(record_criterion):
    cleared = conserved = identical = True
    fills = 0
    for seed in range(100):
        sc = generate_scenario(10_000 + seed)
        res = run(sc)
        rep = verify_run(res)
        conserved &= rep.ok
        if res.clearing is not None:
            cleared &= not res.clearing.crossing_pairs()
            fills += len(res.clearing.fills) + len(res.clearing.residual_fills)
        # every bid still open after clearing would be a possible crossing
        cleared &= res.trace[-1].escrow == 0.0
        identical &= run(sc).trace.to_csv() == res.trace.to_csv()
    ok = cleared and conserved and identical
    record_criterion(10, ok, f"100 scenarios ({fills} clearing fills), cleared={cleared}, "
                             f"invariants={conserved}, byte-identical reruns={identical}")
    assert ok
