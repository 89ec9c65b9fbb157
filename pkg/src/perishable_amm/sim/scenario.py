"""Scenario documents: schema, loading, validation and random generation.

A scenario is a YAML (or JSON) mapping. Schema version 1::

    schema_version: 1
    seed: 7
    bounds: {a: 0.5, b: 2.0}
    fee_rate: 0.003
    epochs: {count: 4, stride: 10}
    clearing: {mechanism: matching, floor: 0.0, oracle: true}
    min_bid: 0.0
    hidden_bids: false
    pool: {x: 1000, y: 40, constant: 1.0, owner: lp0, ask: 5.0}
    agents:
      - id: lp1
        type: provider
        ask: 4.0
        script:
          - {time: 10, action: join, deposit_x: 500, constant: 1.5}
          - {time: 20, action: set_constant, constant: 1.2}
      - id: hunter
        type: bargain_hunter
        script:
          - {time: 3, action: bid, price: 4.0}
          - {time: 15, action: raise, bid: 0, price: 5.0}
      - id: walkin
        type: normal
        policy: {rate: 0.3, valuation: {low: 10, high: 40}}

Every agent has either a ``script`` (timed actions) or a ``policy``
(stochastic behaviour driven by the scenario seed), or both. A provider
agent whose id is the pool owner scripts the owner's own constant changes
and exit; its ``ask`` is ignored in favour of ``pool.ask``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from ..curve import Bounds
from ..errors import ScenarioParseError, ScenarioValidationError
from ..pool import EpochSchedule

SCHEMA_VERSION = 1
MECHANISMS = ("dutch", "matching")
AGENT_TYPES = ("bargain_hunter", "normal", "high_flyer", "provider")
ACTIONS = {
    "provider": {"join": {"deposit_x", "constant"}, "set_constant": {"constant"}, "exit": set()},
    "bargain_hunter": {"bid": {"price"}, "raise": {"price"}},
    "normal": {"buy": set(), "sell": set()},
    "high_flyer": {"buy": set(), "sell": set()},
}
OPTIONAL_ACTION_KEYS = {"bid": {"hidden"}, "raise": {"bid"}, "buy": {"units", "max_price"}, "sell": {"units"}}
TOP_LEVEL_KEYS = {
    "schema_version", "seed", "bounds", "fee_rate", "epochs", "clearing",
    "min_bid", "hidden_bids", "pool", "agents", "name",
}


@dataclass(frozen=True)
class Action:
    time: int
    action: str
    params: dict = field(default_factory=dict)


@dataclass
class AgentSpec:
    id: str
    type: str
    script: list = field(default_factory=list)
    policy: dict | None = None
    ask: object = 0.0


@dataclass
class PoolSpec:
    x: float
    y: float
    constant: float
    owner: str = "lp0"
    ask: object = 0.0


@dataclass
class Scenario:
    seed: int
    bounds: Bounds
    pool: PoolSpec
    epoch_count: int = 1
    epoch_stride: int = 10
    fee_rate: float = 0.003
    mechanism: str = "matching"
    floor: float = 0.0
    oracle: bool = False
    min_bid: float = 0.0
    hidden_bids: bool = False
    agents: list = field(default_factory=list)
    name: str = ""
    schema_version: int = SCHEMA_VERSION

    @property
    def schedule(self):
        return EpochSchedule.uniform(self.epoch_count, self.epoch_stride)

    def with_seed(self, seed):
        from dataclasses import replace

        return replace(self, seed=int(seed))

    def to_dict(self):
        def ask(v):
            return dict(v) if isinstance(v, dict) else v

        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "seed": self.seed,
            "bounds": {"a": self.bounds.a, "b": self.bounds.b},
            "fee_rate": self.fee_rate,
            "epochs": {"count": self.epoch_count, "stride": self.epoch_stride},
            "clearing": {"mechanism": self.mechanism, "floor": self.floor, "oracle": self.oracle},
            "min_bid": self.min_bid,
            "hidden_bids": self.hidden_bids,
            "pool": {"x": self.pool.x, "y": self.pool.y, "constant": self.pool.constant,
                     "owner": self.pool.owner, "ask": ask(self.pool.ask)},
            "agents": [
                {
                    "id": a.id,
                    "type": a.type,
                    **({"ask": ask(a.ask)} if a.type == "provider" else {}),
                    **({"script": [{"time": s.time, "action": s.action, **s.params} for s in a.script]}
                       if a.script else {}),
                    **({"policy": a.policy} if a.policy else {}),
                }
                for a in self.agents
            ],
        }


class _Checker:
    """Collects every violation instead of stopping at the first."""

    def __init__(self):
        self.problems = []

    def fail(self, path, msg):
        self.problems.append(f"{path}: {msg}")

    def number(self, path, value, *, positive=False, nonneg=False, integer=False, default=None):
        if value is None:
            if default is not None:
                return default
            self.fail(path, "is required")
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(path, f"must be a finite number, got {value!r}")
            return None
        if integer and int(value) != value:
            self.fail(path, f"must be an integer, got {value!r}")
            return None
        if positive and not value > 0:
            self.fail(path, f"must be positive, got {value!r}")
        if nonneg and value < 0:
            self.fail(path, f"must be nonnegative, got {value!r}")
        return int(value) if integer else float(value)

    def mapping(self, path, value, required=True):
        if value is None and not required:
            return {}
        if not isinstance(value, dict):
            self.fail(path, "must be a mapping")
            return {}
        return value

    def price_range(self, path, value):
        """A price is a number or ``{low, high}`` drawn uniformly per use."""
        if isinstance(value, dict):
            lo = self.number(f"{path}.low", value.get("low"), nonneg=True)
            hi = self.number(f"{path}.high", value.get("high"), nonneg=True)
            if lo is not None and hi is not None and hi < lo:
                self.fail(path, "needs low <= high")
            return {"low": lo, "high": hi}
        return self.number(path, value, nonneg=True, default=0.0)


def _parse_text(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ScenarioParseError(str(exc.problem or exc), line=line) from None
    except yaml.YAMLError as exc:
        raise ScenarioParseError(str(exc)) from None
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a mapping", line=1)
    return doc


def load_scenario(source) -> Scenario:
    """Parse and validate a scenario from a path, text, or already-parsed mapping."""
    if isinstance(source, dict):
        doc = source
    else:
        text = os.fspath(source) if isinstance(source, os.PathLike) else str(source)
        if "\n" not in text and (isinstance(source, os.PathLike) or os.path.isfile(text)):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        doc = _parse_text(text)
    return scenario_from_dict(doc)


def scenario_from_dict(doc) -> Scenario:
    ck = _Checker()
    for key in sorted(set(doc) - TOP_LEVEL_KEYS):
        ck.fail(key, "unknown field")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        ck.fail("schema_version", f"unsupported version {version!r}; expected {SCHEMA_VERSION}")

    seed = ck.number("seed", doc.get("seed", 0), integer=True, nonneg=True)

    bd = ck.mapping("bounds", doc.get("bounds"))
    a = ck.number("bounds.a", bd.get("a"), positive=True)
    b = ck.number("bounds.b", bd.get("b"), positive=True)
    bounds = None
    if a is not None and b is not None:
        if not a < b:
            ck.fail("bounds", f"need a < b, got a={a}, b={b}")
        else:
            bounds = Bounds(a, b)

    fee = ck.number("fee_rate", doc.get("fee_rate", 0.003), nonneg=True)
    if fee is not None and not fee < 1:
        ck.fail("fee_rate", "must be < 1")

    ep = ck.mapping("epochs", doc.get("epochs", {}), required=False)
    count = ck.number("epochs.count", ep.get("count", 1), integer=True, positive=True)
    stride = ck.number("epochs.stride", ep.get("stride", 10), integer=True, positive=True)

    cl = ck.mapping("clearing", doc.get("clearing", {}), required=False)
    mechanism = cl.get("mechanism", "matching")
    if mechanism not in MECHANISMS:
        ck.fail("clearing.mechanism", f"unknown value {mechanism!r}; allowed values: {', '.join(MECHANISMS)}")
    floor = ck.number("clearing.floor", cl.get("floor", 0.0), nonneg=True)
    oracle = bool(cl.get("oracle", False))
    min_bid = ck.number("min_bid", doc.get("min_bid", 0.0), nonneg=True)
    hidden = bool(doc.get("hidden_bids", False))

    pd = ck.mapping("pool", doc.get("pool"))
    px = ck.number("pool.x", pd.get("x"), positive=True)
    py = ck.number("pool.y", pd.get("y"), positive=True)
    pc = ck.number("pool.constant", pd.get("constant"), positive=True)
    if bounds is not None and pc is not None and pc not in bounds:
        ck.fail("pool.constant", f"{pc} outside bounds [{bounds.a}, {bounds.b}]")
    owner = str(pd.get("owner", "lp0"))
    pool_ask = ck.price_range("pool.ask", pd.get("ask", 0.0))

    schedule = None
    if count is not None and stride is not None:
        schedule = EpochSchedule.uniform(count, stride)

    agents = []
    seen = set()
    raw_agents = doc.get("agents") or []
    if not isinstance(raw_agents, list):
        ck.fail("agents", "must be a list")
        raw_agents = []
    for i, raw in enumerate(raw_agents):
        path = f"agents[{i}]"
        raw = ck.mapping(path, raw)
        aid = raw.get("id")
        if aid is None:
            ck.fail(f"{path}.id", "is required")
            continue
        aid = str(aid)
        if aid in seen:
            ck.fail(f"{path}.id", f"duplicate agent id {aid!r}")
        seen.add(aid)
        atype = raw.get("type")
        if aid == owner and atype != "provider":
            ck.fail(f"{path}.id", f"{aid!r} is the pool owner and can only be a provider")
            continue
        if atype not in AGENT_TYPES:
            ck.fail(f"{path}.type", f"unknown agent type {atype!r}; allowed values: {', '.join(AGENT_TYPES)}")
            continue
        for key in sorted(set(raw) - {"id", "type", "script", "policy", "ask"}):
            ck.fail(f"{path}.{key}", "unknown field")
        script = _check_script(ck, path, atype, raw.get("script") or [], schedule, bounds)
        policy = _check_policy(ck, path, atype, raw.get("policy"), bounds)
        ask = ck.price_range(f"{path}.ask", raw.get("ask", 0.0)) if atype == "provider" else 0.0
        agents.append(AgentSpec(aid, atype, script, policy, ask))

    if ck.problems:
        raise ScenarioValidationError(ck.problems)
    return Scenario(
        seed=seed,
        bounds=bounds,
        pool=PoolSpec(px, py, pc, owner, pool_ask),
        epoch_count=count,
        epoch_stride=stride,
        fee_rate=fee,
        mechanism=mechanism,
        floor=floor,
        oracle=oracle,
        min_bid=min_bid,
        hidden_bids=hidden,
        agents=agents,
        name=str(doc.get("name", "")),
    )


def _check_script(ck, path, atype, script, schedule, bounds):
    if not isinstance(script, list):
        ck.fail(f"{path}.script", "must be a list")
        return []
    allowed = ACTIONS[atype]
    out = []
    for j, raw in enumerate(script):
        sp = f"{path}.script[{j}]"
        raw = ck.mapping(sp, raw)
        t = ck.number(f"{sp}.time", raw.get("time"), integer=True, nonneg=True)
        act = raw.get("action")
        if act not in allowed:
            ck.fail(f"{sp}.action", f"{act!r} not allowed for {atype}; allowed values: {', '.join(allowed)}")
            continue
        params = {k: v for k, v in raw.items() if k not in ("time", "action")}
        for key in sorted(allowed[act] - set(params)):
            ck.fail(f"{sp}.{key}", "is required")
        for key in sorted(set(params) - allowed[act] - OPTIONAL_ACTION_KEYS.get(act, set())):
            ck.fail(f"{sp}.{key}", "unknown field")
        for key in ("deposit_x", "price", "max_price"):
            if key in params:
                ck.number(f"{sp}.{key}", params[key], positive=True)
        for key in ("units", "bid"):
            if key in params:
                ck.number(f"{sp}.{key}", params[key], integer=True, nonneg=(key == "bid"), positive=(key == "units"))
        if "constant" in params:
            c = ck.number(f"{sp}.constant", params["constant"], positive=True)
            if bounds is not None and c is not None and c not in bounds:
                ck.fail(f"{sp}.constant", f"{c} outside bounds [{bounds.a}, {bounds.b}]")
        if t is not None and schedule is not None:
            if atype == "provider" and t not in schedule:
                ck.fail(f"{sp}.time", f"provider actions must fall on epoch times {list(schedule.times)}")
            elif atype != "provider" and t >= schedule.clearing_time:
                ck.fail(f"{sp}.time", f"must be before clearing time {schedule.clearing_time}")
        if t is not None:
            out.append(Action(t, act, params))
    return sorted(out, key=lambda s: s.time)


def _check_policy(ck, path, atype, policy, bounds):
    if policy is None:
        return None
    pp = f"{path}.policy"
    policy = ck.mapping(pp, policy)
    rate = ck.number(f"{pp}.rate", policy.get("rate"), nonneg=True)
    if rate is not None and rate > 1:
        ck.fail(f"{pp}.rate", "is a per-tick probability and must be <= 1")
    out = dict(policy)
    if atype == "provider":
        ck.number(f"{pp}.deposit_x", policy.get("deposit_x", 0.0), nonneg=True)
        cr = ck.price_range(f"{pp}.constant", policy.get("constant", {"low": bounds.a, "high": bounds.b}
                                                          if bounds else 1.0))
        if bounds is not None and isinstance(cr, dict) and None not in cr.values():
            if cr["low"] < bounds.a or cr["high"] > bounds.b:
                ck.fail(f"{pp}.constant", "range must lie inside bounds")
        out["constant"] = cr
    else:
        val = ck.price_range(f"{pp}.valuation", policy.get("valuation"))
        out["valuation"] = val
        if atype == "bargain_hunter":
            d = ck.number(f"{pp}.discount", policy.get("discount", 0.5), positive=True)
            if d is not None and d > 1:
                ck.fail(f"{pp}.discount", "must be <= 1")
            ck.number(f"{pp}.step", policy.get("step", 0.1), positive=True)
    return out


def dump_scenario(scenario, fh=None):
    text = yaml.safe_dump(scenario.to_dict(), sort_keys=False)
    if fh is not None:
        fh.write(text)
    return text


def generate_scenario(seed, *, mechanism=None, n_providers=None, n_hunters=None, n_buyers=None) -> Scenario:
    """Random but valid full scenario: providers joining and re-steering,
    walk-in buyers, and bargain hunters, with the oracle enabled."""
    rng = np.random.default_rng(seed)
    a, b = 0.5, 2.0
    count = int(rng.integers(2, 6))
    stride = int(rng.integers(3, 9))
    n_providers = int(rng.integers(0, 3)) if n_providers is None else n_providers
    n_hunters = int(rng.integers(1, 7)) if n_hunters is None else n_hunters
    n_buyers = int(rng.integers(0, 4)) if n_buyers is None else n_buyers
    y0 = float(rng.integers(8, 30))
    x0 = float(round(y0 * rng.uniform(2.0, 10.0), 2))
    price = x0 / y0
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": f"random-{seed}",
        "seed": int(seed),
        "bounds": {"a": a, "b": b},
        "fee_rate": float(rng.choice([0.0, 0.003, 0.01])),
        "epochs": {"count": count, "stride": stride},
        "clearing": {
            "mechanism": mechanism or str(rng.choice(MECHANISMS)),
            "floor": float(rng.choice([0.0, 0.0, round(0.2 * price, 3)])),
            "oracle": True,
        },
        "min_bid": 0.0,
        "hidden_bids": bool(rng.random() < 0.3),
        "pool": {"x": x0, "y": y0, "constant": float(round(rng.uniform(a, b), 3)), "owner": "lp0",
                 "ask": {"low": 0.0, "high": round(1.5 * price, 3)}},
        "agents": [],
    }
    for i in range(n_providers):
        doc["agents"].append({
            "id": f"lp{i + 1}",
            "type": "provider",
            "ask": {"low": 0.0, "high": round(1.5 * price, 3)},
            "policy": {"rate": 0.5, "deposit_x": round(float(rng.uniform(0.2, 1.0) * x0), 2),
                       "constant": {"low": a, "high": b}},
        })
    for i in range(n_hunters):
        doc["agents"].append({
            "id": f"bh{i + 1}",
            "type": "bargain_hunter",
            "policy": {"rate": 0.3, "valuation": {"low": round(0.2 * price, 3), "high": round(1.5 * price, 3)},
                       "discount": 0.6, "step": 0.1},
        })
    for i in range(n_buyers):
        kind = "high_flyer" if i % 2 else "normal"
        hi = 4.0 if kind == "high_flyer" else 1.2
        doc["agents"].append({
            "id": f"cu{i + 1}",
            "type": kind,
            "policy": {"rate": 0.2, "valuation": {"low": round(0.5 * price, 3), "high": round(hi * price, 3)}},
        })
    return scenario_from_dict(doc)
