"""Cross-module invariant checks over a finished run."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from .engine import run as run_scenario
from .trace import replay

TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures

    def fail(self, index, message):
        self.failures.append((index, message))


@dataclass
class InvariantReport:
    checks: list
    halted: bool = False

    @property
    def failure_count(self):
        return sum(len(c.failures) for c in self.checks)

    @property
    def ok(self):
        return self.failure_count == 0

    def lines(self):
        out = []
        for c in self.checks:
            out.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}")
            for idx, msg in c.failures[:20]:
                where = f"event {idx}" if idx is not None else "final state"
                out.append(f"    {where}: {msg}")
        status = "halted" if self.halted else "completed"
        out.append(f"{self.failure_count} failure(s); pool {status}")
        return out


def _close(a, b, scale=1.0):
    return abs(a - b) <= TOL * max(1.0, scale)


def _check_order(events):
    ck = CheckResult("event order")
    for i, e in enumerate(events):
        if e.seq != i:
            ck.fail(i, f"sequence number {e.seq} out of place")
        if i and e.time < events[i - 1].time:
            ck.fail(i, f"time {e.time} runs backwards from {events[i - 1].time}")
    return ck


def _check_x_conservation(events):
    ck = CheckResult("X conservation (in = out + reserves + fees + escrow)")
    flow = []
    volume = 0.0
    for i, e in enumerate(events):
        flow.append(e.x_flow)
        volume += abs(e.x_flow)
        held = e.pool_x + e.escrow + e.fee_vault
        total = math.fsum(flow)
        if not _close(total, held, volume):
            ck.fail(i, f"net inflow {total!r} != holdings {held!r}")
    return ck


def _check_y_conservation(events, final):
    ck = CheckResult("Y conservation")
    flow = []
    for i, e in enumerate(events):
        flow.append(e.y_flow)
        if not _close(math.fsum(flow), e.pool_y, final.y_supply):
            ck.fail(i, f"net Y inflow {math.fsum(flow)!r} != pool reserve {e.pool_y!r}")
    deposits = math.fsum(e.y_flow for e in events if e.kind == "join")
    to_providers = -math.fsum(e.y_flow for e in events if e.kind in ("exit", "retrieval"))
    held = math.fsum(replay(events).holdings.values())
    pool_y = events[-1].pool_y if events else 0.0
    if not _close(deposits, held + pool_y + to_providers, deposits):
        ck.fail(None, f"deposited {deposits} != held {held} + pool {pool_y} + withdrawn {to_providers}")
    if not _close(deposits, final.y_supply, deposits):
        ck.fail(None, f"trace deposits {deposits} != engine supply {final.y_supply}")
    return ck


def _check_curve(events):
    ck = CheckResult("pool state stays on the active curve")
    k = c = None
    for i, e in enumerate(events):
        if e.kind in ("join", "exit", "tick"):
            if e.curve_c is None or e.pool_x <= 0:
                k = None
                continue
            c, k = e.curve_c, e.pool_x**e.curve_c * e.pool_y
        elif e.kind in ("amm_trade", "bid_fill") and k is not None:
            if e.curve_c != c:
                ck.fail(i, f"curve exponent changed between epochs ({c} -> {e.curve_c})")
                continue
            surface = e.pool_x**c * e.pool_y
            if abs(surface - k) > TOL * k:
                ck.fail(i, f"x^c*y = {surface!r} drifted from {k!r}")
    return ck


def _check_bids(events):
    ck = CheckResult("bids: increase-only prices, buyer never pays above bid")
    price = {}
    for i, e in enumerate(events):
        if e.kind == "bid_submit":
            price[e.ref] = e.value
        elif e.kind == "bid_raise":
            if e.ref not in price or not e.value > price[e.ref]:
                ck.fail(i, f"bid {e.ref} raised to {e.value} from {price.get(e.ref)}")
            price[e.ref] = e.value
        elif e.kind in ("bid_fill", "clearing_fill", "residual_fill"):
            if e.ref not in price:
                ck.fail(i, f"fill of unknown bid {e.ref}")
            elif e.value > price[e.ref] * (1 + 1e-12):
                ck.fail(i, f"bid {e.ref} paid {e.value} above its price {price[e.ref]}")
        if e.escrow < -TOL:
            ck.fail(i, f"negative escrow {e.escrow}")
    return ck


def _check_replay(events, final):
    ck = CheckResult("replay reconstructs final state")
    st = replay(events)
    scale = max(1.0, abs(final.x_in), final.y_supply)
    for name in ("pool_x", "pool_y", "escrow", "fee_vault"):
        got, want = getattr(st, name), getattr(final, name)
        if not _close(got, want, scale):
            ck.fail(None, f"{name}: replay {got!r} vs engine {want!r}")
    if st.curve_c != final.curve_c and final.curve_c is not None:
        ck.fail(None, f"curve_c: replay {st.curve_c!r} vs engine {final.curve_c!r}")
    for pid in set(st.fees) | set(final.fees):
        if not _close(st.fees.get(pid, 0.0), final.fees.get(pid, 0.0), scale):
            ck.fail(None, f"fees[{pid}]: replay {st.fees.get(pid, 0.0)!r} vs engine {final.fees.get(pid, 0.0)!r}")
    for aid in set(st.holdings) | set(final.holdings):
        if st.holdings.get(aid, 0.0) != final.holdings.get(aid, 0.0):
            ck.fail(None, f"holdings[{aid}]: replay {st.holdings.get(aid)} vs engine {final.holdings.get(aid)}")
    payouts = defaultdict(float)
    for e in events:
        if e.kind == "payout":
            payouts[e.actor] += e.value
    for pid in set(payouts) | set(final.payouts):
        if not _close(payouts.get(pid, 0.0), final.payouts.get(pid, 0.0), scale):
            ck.fail(None, f"payouts[{pid}]: trace {payouts.get(pid, 0.0)!r} vs engine {final.payouts.get(pid, 0.0)!r}")
    return ck


def _check_clearing(result, events):
    ck = CheckResult("market clearance and greedy bound")
    if result.clearing is not None:
        for u, b in result.clearing.crossing_pairs():
            ck.fail(None, f"unit {u} and bid {b} still cross after clearing")
    weights = {e.ref: (i, e.value) for i, e in enumerate(events) if e.kind == "metric" and e.actor == "clearing"}
    if "greedy_weight" in weights and "exact_weight" in weights:
        i, greedy = weights["greedy_weight"]
        exact = weights["exact_weight"][1]
        if greedy < 0.5 * exact - TOL:
            ck.fail(i, f"greedy weight {greedy} below half of optimum {exact}")
    return ck


def _check_ledgers(result):
    ck = CheckResult("share and escrow ledgers")
    book = result.book
    lhs = book.escrow_submitted
    rhs = math.fsum([book.open_escrow(), book.escrow_refunded, book.escrow_paid])
    if not _close(lhs, rhs, lhs):
        ck.fail(None, f"escrow submitted {lhs} != open + refunded + paid {rhs}")
    shares = result.final.shares
    if shares and abs(math.fsum(shares.values()) - 1.0) > 1e-12:
        ck.fail(None, f"shares sum to {math.fsum(shares.values())}")
    return ck


def verify_run(result, trace=None) -> InvariantReport:
    """Check every invariant against ``trace`` (defaults to the run's own)."""
    events = list(trace if trace is not None else result.trace)
    final = result.final
    checks = [
        _check_order(events),
        _check_x_conservation(events),
        _check_y_conservation(events, final),
        _check_curve(events),
        _check_bids(events),
        _check_replay(events, final),
        _check_clearing(result, events),
        _check_ledgers(result),
    ]
    return InvariantReport(checks, halted=final.halted and not any(e.kind == "retrieval" for e in events))


def verify(scenario) -> InvariantReport:
    return verify_run(run_scenario(scenario))
