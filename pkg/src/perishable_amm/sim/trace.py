"""Trace events, their CSV form, and state reconstruction from a trace.

Accounting columns:

``x_flow`` / ``y_flow``
    X and Y crossing the system boundary in this event, positive into the
    system. The system holds pool reserves, escrowed bid cash and
    undistributed fees, so at every prefix
    ``sum(x_flow) == pool_x + escrow + fee_vault`` and
    ``sum(y_flow) == pool_y``.
``dx_pool`` / ``dy_pool``
    change of the pool reserves caused by this event.
``pool_x, pool_y, curve_c, escrow, fee_vault``
    system state after the event.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import astuple, dataclass, fields

from ..errors import IncompleteTraceError

TRACE_SCHEMA_VERSION = 1

KINDS = (
    "tick", "join", "exit", "set_constant", "amm_trade", "bid_submit", "bid_raise",
    "bid_fill", "clearing_fill", "residual_fill", "payout", "refund", "retrieval",
    "fee_credit", "metric",
)
BID_KINDS = {"bid_submit", "bid_raise", "bid_fill", "clearing_fill", "residual_fill", "refund"}


@dataclass
class TraceEvent:
    seq: int
    time: int
    kind: str
    actor: str = ""
    ref: str = ""
    value: float | None = None
    qty: float = 0.0
    x_flow: float = 0.0
    y_flow: float = 0.0
    dx_pool: float = 0.0
    dy_pool: float = 0.0
    pool_x: float = 0.0
    pool_y: float = 0.0
    curve_c: float | None = None
    escrow: float = 0.0
    fee_vault: float = 0.0
    hidden: bool = False


COLUMNS = tuple(f.name for f in fields(TraceEvent) if f.name != "hidden")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Trace:
    def __init__(self, events=None, hidden_bids=False):
        self.events = list(events or [])
        self.hidden_bids = hidden_bids

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def __getitem__(self, i):
        return self.events[i]

    def rows(self, public=False):
        for e in self.events:
            row = dict(zip(COLUMNS, astuple(e)[: len(COLUMNS)]))
            if public and self.hidden_bids:
                # sealed bids: bid prices and everything they can be inferred from
                row["escrow"] = None
                if e.kind in BID_KINDS:
                    row["x_flow"] = None
                    if e.kind in ("bid_submit", "bid_raise", "refund"):
                        row["value"] = None
            yield row

    def to_csv(self, public=False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# trace schema", TRACE_SCHEMA_VERSION])
        w.writerow(COLUMNS)
        for row in self.rows(public):
            w.writerow([_fmt(row[c]) for c in COLUMNS])
        return buf.getvalue()

    def write_csv(self, path, public=False):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv(public))


_FLOAT_COLS = {"value", "qty", "x_flow", "y_flow", "dx_pool", "dy_pool", "pool_x", "pool_y",
               "curve_c", "escrow", "fee_vault"}


def read_csv(source) -> Trace:
    """Parse a trace CSV (path or text). Redacted cells come back as ``None``."""
    if "\n" in str(source):
        text = str(source)
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    first = next(reader, None)
    if not first or first[0] != "# trace schema":
        raise IncompleteTraceError("missing trace schema header")
    if int(first[1]) != TRACE_SCHEMA_VERSION:
        raise IncompleteTraceError(f"unsupported trace schema {first[1]}")
    header = next(reader, None)
    if tuple(header or ()) != COLUMNS:
        raise IncompleteTraceError("unexpected trace columns")
    events = []
    redacted = False
    for rec in reader:
        kw = {}
        for c, cell in zip(COLUMNS, rec):
            if c in ("seq", "time"):
                kw[c] = int(cell)
            elif c in _FLOAT_COLS:
                kw[c] = float(cell) if cell != "" else None
                if cell == "" and c in ("escrow", "x_flow"):
                    redacted = True
            else:
                kw[c] = cell
        events.append(TraceEvent(**kw))
    return Trace(events, hidden_bids=redacted)


@dataclass
class ReplayState:
    pool_x: float
    pool_y: float
    curve_c: float | None
    escrow: float
    fee_vault: float
    fees: dict
    holdings: dict
    x_in: float
    y_in: float


def replay(events) -> ReplayState:
    """Rebuild the final system state from per-event deltas alone."""
    escrow = []
    fees = defaultdict(float)
    holdings = defaultdict(float)
    x_in, y_in = [], []
    curve_c = None
    for e in events:
        x_in.append(e.x_flow or 0.0)
        y_in.append(e.y_flow or 0.0)
        if e.curve_c is not None:
            curve_c = e.curve_c
        if e.kind in ("bid_submit", "bid_raise"):
            escrow.append(e.x_flow)
        elif e.kind == "bid_fill":
            escrow.append(-(e.value - e.x_flow))
        elif e.kind in ("clearing_fill", "residual_fill", "refund"):
            escrow.append(e.x_flow)
        if e.kind == "fee_credit":
            fees[e.actor] += e.value
        if e.kind in ("amm_trade", "bid_fill", "clearing_fill", "residual_fill"):
            holdings[e.actor] -= e.y_flow
    return ReplayState(
        pool_x=math.fsum(e.dx_pool for e in events),
        pool_y=math.fsum(e.dy_pool for e in events),
        curve_c=curve_c,
        escrow=math.fsum(escrow),
        fee_vault=math.fsum(v for v in fees.values()),
        fees={k: v for k, v in fees.items()},
        holdings={k: v for k, v in holdings.items() if v != 0},
        x_in=math.fsum(x_in),
        y_in=math.fsum(y_in),
    )
