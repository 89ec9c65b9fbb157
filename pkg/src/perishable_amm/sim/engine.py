"""Deterministic discrete-event engine.

Time advances in integer ticks. Within a tick the order is fixed: provider
actions (epoch times only), the epoch tick, then the other agents in agent
id order. Resting bids are matched against the pool after every change to
the pool state or curve. At the clearing time the book is frozen and the
remaining units are cleared. At the retrieval time providers take out what
is left.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..clearing import clear_market
from ..errors import AMMError, InsufficientInventoryError
from ..loss import LossSnapshot, divergence_loss, order_loss
from ..orders import OrderBook
from ..pool import Pool
from .trace import Trace, TraceEvent


class SimulationError(AMMError):
    """A module error raised while executing a scenario event."""

    def __init__(self, time, agent, action, cause):
        self.time, self.agent, self.action, self.cause = time, agent, action, cause
        super().__init__(f"t={time} agent={agent} action={action}: {cause}")


@dataclass
class FinalState:
    pool_x: float
    pool_y: float
    curve_c: float | None
    escrow: float
    fee_vault: float
    fees: dict
    holdings: dict
    shares: dict
    halted: bool
    x_in: float
    y_in: float
    y_supply: float
    payouts: dict = field(default_factory=dict)


@dataclass
class RunResult:
    scenario: object
    trace: Trace
    final: FinalState
    clearing: object
    pool: Pool
    book: OrderBook


class _AgentState:
    def __init__(self, spec, rng):
        self.spec = spec
        self.rng = rng
        self.bids = []
        self.valuation = None
        self.joined = False
        self.script = defaultdict(list)
        for act in spec.script:
            self.script[act.time].append(act)


def _draw(rng, value):
    if isinstance(value, dict):
        return float(rng.uniform(value["low"], value["high"]))
    return float(value)


class Engine:
    def __init__(self, scenario):
        self.sc = scenario
        self.schedule = scenario.schedule
        seeds = np.random.SeedSequence(scenario.seed).spawn(len(scenario.agents) + 1)
        self.owner_rng = np.random.default_rng(seeds[0])
        self.agents = [_AgentState(a, np.random.default_rng(s)) for a, s in zip(scenario.agents, seeds[1:])]
        self.providers = [a for a in self.agents if a.spec.type == "provider"]
        self.others = sorted((a for a in self.agents if a.spec.type != "provider"), key=lambda a: a.spec.id)
        self.providers.sort(key=lambda a: a.spec.id)
        self.events = []
        self.holdings = defaultdict(float)
        self.loss_snapshots = {}
        self.payouts = defaultdict(float)
        self.y_supply = 0.0
        self.pool = None
        self.book = OrderBook(self.schedule.clearing_time, scenario.min_bid)
        self.clearing = None
        self._now = 0

    # event plumbing

    def _emit(self, kind, actor="", ref="", value=None, qty=0.0, x_flow=0.0, y_flow=0.0,
              dx_pool=0.0, dy_pool=0.0, hidden=False, state=None):
        pool = self.pool
        halted = pool is None or pool.halted
        if state is not None:
            px, py, vault = state
        elif pool is None:
            px = py = vault = 0.0
        else:
            px, py, vault = pool.state.x, pool.state.y, pool.fee_vault()
        self.events.append(TraceEvent(
            seq=len(self.events),
            time=self._now,
            kind=kind,
            actor=actor,
            ref=ref,
            value=None if value is None else float(value),
            qty=float(qty),
            x_flow=float(x_flow),
            y_flow=float(y_flow),
            dx_pool=float(dx_pool),
            dy_pool=float(dy_pool),
            pool_x=px,
            pool_y=py,
            curve_c=None if halted else pool.curve.c,
            escrow=self.book.open_escrow(),
            fee_vault=vault,
            hidden=hidden,
        ))

    def _emit_credits(self, credits):
        for pid in sorted(credits):
            self._emit("fee_credit", pid, "fee", credits[pid])

    def _match(self):
        if self.pool is None or self.pool.halted:
            return
        while fills := self.book.match_against_amm(self.pool, max_fills=1):
            (f,) = fills
            self.holdings[f.user] += 1
            self._emit("bid_fill", f.user, f.bid_id, f.payment, 1, -f.refund, -1, f.curve_cost, -1,
                       hidden=self.sc.hidden_bids)
            self._emit_credits(f.credits)

    def _snapshot_loss(self, pid):
        js = self.pool.providers[pid].join_snapshot
        orders = tuple(b.price for b in self.book.bids)
        self.loss_snapshots[pid] = LossSnapshot(js.share0, js.x0, js.y0, js.price0, orders)

    # provider actions

    def _join(self, pid, deposit_x, constant):
        x_before, y_before = self.pool.state.x, self.pool.state.y
        deposit_y = self.pool.join(pid, deposit_x, constant, self._now)
        self.y_supply += deposit_y
        self._snapshot_loss(pid)
        self._emit("join", pid, "deposit", constant, deposit_y, deposit_x, deposit_y,
                   self.pool.state.x - x_before, self.pool.state.y - y_before)
        self._match()

    def _exit(self, pid):
        x_before, y_before = self.pool.state.x, self.pool.state.y
        px, py, fees = self.pool.remove_liquidity(pid, self._now)
        self.loss_snapshots.pop(pid, None)
        self._emit("exit", pid, "withdraw", px, py, -(px + fees), -py,
                   self.pool.state.x - x_before, self.pool.state.y - y_before)
        if fees:
            self._emit("fee_credit", pid, "fee_withdrawal", -fees)
        self._match()

    def _provider_turn(self, agent):
        pid = agent.spec.id
        actions = list(agent.script.get(self._now, ()))
        policy = agent.spec.policy
        if policy and agent.rng.random() < policy["rate"]:
            if pid not in self.pool.providers:
                if policy.get("deposit_x", 0) > 0 and not agent.joined:
                    agent.joined = True
                    actions.append(_Act("join", {"deposit_x": policy["deposit_x"],
                                                 "constant": _draw(agent.rng, policy["constant"])}))
            else:
                actions.append(_Act("set_constant", {"constant": _draw(agent.rng, policy["constant"])}))
        for act in actions:
            if self.pool.halted:
                return
            try:
                if act.action == "join":
                    self._join(pid, act.params["deposit_x"], act.params["constant"])
                elif act.action == "set_constant":
                    self.pool.update_constant(pid, act.params["constant"], self._now)
                    self._emit("set_constant", pid, "pending", act.params["constant"])
                elif act.action == "exit":
                    self._exit(pid)
            except AMMError as exc:
                raise SimulationError(self._now, pid, act.action, exc) from exc

    # customer actions

    def _buy(self, agent, units, max_price):
        for _ in range(units):
            if self.pool.halted:
                return
            try:
                cost, fee = self.pool.buy_quote(1)
            except InsufficientInventoryError:
                return
            if cost + fee > max_price:
                return
            cost, fee, credits = self.pool.buy_units(1)
            self.holdings[agent.spec.id] += 1
            self._emit("amm_trade", agent.spec.id, "buy", cost + fee, 1, cost + fee, -1, cost, -1)
            self._emit_credits(credits)
            self._match()

    def _sell(self, agent, units):
        aid = agent.spec.id
        for _ in range(units):
            if self.pool.halted or self.holdings[aid] < 1:
                return
            proceeds, fee, credits = self.pool.sell_units(1)
            self.holdings[aid] -= 1
            self._emit("amm_trade", aid, "sell", proceeds - fee, 1, -(proceeds - fee), 1, -proceeds, 1)
            self._emit_credits(credits)
            self._match()

    def _bid(self, agent, price, hidden=None):
        hidden = self.sc.hidden_bids if hidden is None else bool(hidden)
        if self.pool.halted:
            return
        bid_id = self.book.submit_bid(agent.spec.id, price, self._now, hidden)
        agent.bids.append(bid_id)
        self._emit("bid_submit", agent.spec.id, bid_id, price, 1, price, hidden=hidden)
        self._match()

    def _raise(self, agent, index, price):
        if index >= len(agent.bids):
            return
        bid_id = agent.bids[index]
        if bid_id not in {b.id for b in self.book.bids}:
            return  # already filled
        bid, added = self.book.raise_bid(bid_id, price)
        self._emit("bid_raise", agent.spec.id, bid_id, price, 0, added, hidden=bid.hidden)
        self._match()

    def _customer_turn(self, agent):
        aid = agent.spec.id
        for act in agent.script.get(self._now, ()):
            p = act.params
            try:
                if act.action == "buy":
                    self._buy(agent, int(p.get("units", 1)), float(p.get("max_price", math.inf)))
                elif act.action == "sell":
                    self._sell(agent, int(p.get("units", 1)))
                elif act.action == "bid":
                    self._bid(agent, float(p["price"]), p.get("hidden"))
                elif act.action == "raise":
                    self._raise(agent, int(p.get("bid", 0)), float(p["price"]))
            except AMMError as exc:
                raise SimulationError(self._now, aid, act.action, exc) from exc
        policy = agent.spec.policy
        if not policy or self.pool.halted or agent.rng.random() >= policy["rate"]:
            return
        if agent.spec.type in ("normal", "high_flyer"):
            self._buy(agent, 1, _draw(agent.rng, policy["valuation"]))
            return
        if agent.valuation is None:
            agent.valuation = _draw(agent.rng, policy["valuation"])
        open_ids = {b.id: b for b in self.book.bids}
        mine = [open_ids[b] for b in agent.bids if b in open_ids]
        if not mine:
            price = agent.valuation * policy.get("discount", 0.5)
            if price > self.sc.min_bid and price > 0:
                self._bid(agent, price)
        else:
            bid = mine[0]
            new = min(agent.valuation, bid.price + policy.get("step", 0.1) * agent.valuation)
            if new > bid.price:
                self._raise(agent, agent.bids.index(bid.id), new)

    # phases

    def _open(self):
        spec = self.sc.pool
        self.pool = Pool.open(spec.x, spec.y, spec.constant, spec.owner, self.sc.bounds,
                              self.schedule, self.sc.fee_rate, at=self.schedule.times[0])
        self.y_supply += spec.y
        self._snapshot_loss(spec.owner)
        self._emit("join", spec.owner, "deposit", spec.constant, spec.y, spec.x, spec.y, spec.x, spec.y)

    def _metrics(self):
        if self.pool.halted:
            return
        orders = tuple(b.price for b in self.book.bids)
        for pid in sorted(self.pool.providers):
            p = self.pool.providers[pid]
            snap = self.loss_snapshots[pid]
            dl = divergence_loss(snap, p.share, self.pool.state, self.pool.c)
            ol = order_loss(snap, p.share, self.pool.state, orders)
            self._emit("metric", pid, "divergence_loss", dl)
            self._emit("metric", pid, "order_loss", ol)

    def _asks(self, pid, n):
        if self.sc.mechanism == "dutch":
            return [self.sc.floor] * n
        if pid == self.sc.pool.owner:
            spec_ask, rng = self.sc.pool.ask, self.owner_rng
        else:
            agent = next(a for a in self.providers if a.spec.id == pid)
            spec_ask, rng = agent.spec.ask, agent.rng
        return [_draw(rng, spec_ask) for _ in range(n)]

    def _clear(self):
        pool, book = self.pool, self.book
        listings = book.allocate_units(pool)
        by_owner = defaultdict(list)
        for u in listings:
            by_owner[u.owner].append(u)
        for pid in sorted(by_owner):
            for u, ask in zip(by_owner[pid], self._asks(pid, len(by_owner[pid]))):
                book.set_unit_ask(pid, u.unit_id, ask)
        units, bids = book.snapshot_for_clearing(pool, self._now)
        shares = pool.shares() if not pool.halted else {}
        report = clear_market(units, bids, shares, self.sc.mechanism, self.sc.floor, self.sc.oracle)
        self.clearing = report
        bid_by_id = {b.id: b for b in bids}
        self._emit("metric", self.sc.mechanism, "mechanism")
        for kind, fills in (("clearing_fill", report.fills), ("residual_fill", report.residual_fills)):
            for f in fills:
                bid = bid_by_id[f.bid_id]
                escrow = bid.escrow
                book.release(bid, f.price)
                pool.withdraw_units(1)
                self.holdings[bid.user] += 1
                self._emit(kind, bid.user, f.bid_id, f.price, 1, -escrow, -1, 0.0, -1, hidden=bid.hidden)
                if f.payee == "pro-rata":
                    for pid in sorted(shares):
                        amount = shares[pid] * f.price
                        self.payouts[pid] += amount
                        self._emit("payout", pid, f.unit_id, amount)
                else:
                    self.payouts[f.payee] += f.price
                    self._emit("payout", f.payee, f.unit_id, f.price)
        for bid in report.unfilled_bids:
            escrow = bid.escrow
            book.release(bid, 0.0)
            self._emit("refund", bid.user, bid.id, escrow, 0, -escrow, hidden=bid.hidden)
        if report.greedy_weight is not None:
            self._emit("metric", "clearing", "greedy_weight", report.greedy_weight)
        if report.exact_weight is not None:
            self._emit("metric", "clearing", "exact_weight", report.exact_weight)
        self._emit("metric", "clearing", "unsold_units", len(report.unsold_units))

    def _retrieve(self):
        if self.pool.halted:
            return
        x_left, y_left, vault = self.pool.state.x, self.pool.state.y, self.pool.fee_vault()
        out = self.pool.retrieve()
        for pid in sorted(out):
            px, py, fees = out[pid]
            x_left, y_left, vault = x_left - px, y_left - py, vault - fees
            self._emit("retrieval", pid, "withdraw", px, py, -(px + fees), -py, -px, -py,
                       state=(x_left, y_left, vault))
            if fees:
                self._emit("fee_credit", pid, "fee_withdrawal", -fees, state=(x_left, y_left, vault))

    def run(self) -> RunResult:
        sch = self.schedule
        epochs = set(sch.times)
        for t in range(0, sch.retrieval_time + 1):
            self._now = t
            if t == sch.times[0]:
                self._open()
            if t in epochs:
                for agent in self.providers:
                    self._provider_turn(agent)
                if not self.pool.halted:
                    self.pool.epoch_tick(t)
                    self._emit("tick", "pool", "epoch", self.pool.c)
                    self._match()
                    self._metrics()
            if t < sch.clearing_time:
                for agent in self.others:
                    self._customer_turn(agent)
            if t == sch.clearing_time:
                self._clear()
            if t == sch.retrieval_time:
                self._retrieve()
                self._emit("metric", "engine", "end")
        return RunResult(self.sc, Trace(self.events, self.sc.hidden_bids), self._final(), self.clearing,
                         self.pool, self.book)

    def _final(self):
        pool = self.pool
        return FinalState(
            pool_x=pool.state.x,
            pool_y=pool.state.y,
            curve_c=None if pool.halted else pool.curve.c,
            escrow=self.book.open_escrow(),
            fee_vault=pool.fee_vault(),
            fees={pid: p.fees_accrued for pid, p in pool.providers.items()},
            holdings={k: v for k, v in self.holdings.items() if v != 0},
            shares=pool.shares(),
            halted=pool.halted,
            x_in=math.fsum(e.x_flow for e in self.events),
            y_in=math.fsum(e.y_flow for e in self.events),
            y_supply=self.y_supply,
            payouts=dict(self.payouts),
        )


@dataclass(frozen=True)
class _Act:
    action: str
    params: dict


def run(scenario, seed=None) -> RunResult:
    """Execute ``scenario`` (optionally reseeded) and return trace and final state."""
    if seed is not None:
        scenario = scenario.with_seed(seed)
    return Engine(scenario).run()
