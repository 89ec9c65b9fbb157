"""Run summaries built from a trace alone."""

from __future__ import annotations

import json
import math
from collections import defaultdict

from ..errors import IncompleteTraceError


def report(trace) -> dict:
    events = list(trace)
    if not events or not any(e.kind == "metric" and e.ref == "end" for e in events):
        raise IncompleteTraceError("trace has no end marker; the run did not finish")
    volume_x, volume_units = [], 0
    fees = defaultdict(list)
    payouts = defaultdict(list)
    last_metric = defaultdict(dict)
    clearing = {}
    for e in events:
        if e.kind == "amm_trade" and e.ref == "buy" or e.kind == "bid_fill":
            volume_x.append(e.value)
            volume_units += 1
        elif e.kind == "amm_trade" and e.ref == "sell":
            volume_x.append(e.value)
            volume_units += 1
        elif e.kind == "fee_credit" and e.value > 0:
            fees[e.actor].append(e.value)
        elif e.kind == "payout":
            payouts[e.actor].append(e.value)
        elif e.kind == "metric":
            if e.actor == "clearing":
                clearing[e.ref] = e.value
            elif e.ref == "mechanism":
                clearing["mechanism"] = e.actor
            elif e.ref in ("divergence_loss", "order_loss"):
                last_metric[e.actor][e.ref] = e.value
    fills = sum(1 for e in events if e.kind == "clearing_fill")
    residual = sum(1 for e in events if e.kind == "residual_fill")
    greedy, exact = clearing.get("greedy_weight"), clearing.get("exact_weight")
    providers = sorted(set(fees) | set(payouts) | set(last_metric))
    summary = {
        "events": len(events),
        "total_volume_x": math.fsum(volume_x),
        "total_volume_units": volume_units,
        "fees": {p: math.fsum(fees.get(p, [])) for p in providers},
        "clearing_payouts": {p: math.fsum(payouts.get(p, [])) for p in providers},
        "clearing": {
            "mechanism": clearing.get("mechanism"),
            "fills": fills,
            "residual_fills": residual,
            "greedy_weight": greedy,
            "exact_weight": exact,
            "greedy_exact_ratio": (greedy / exact if exact else (1.0 if exact == 0 and greedy is not None else None))
            if exact is not None else None,
            "unsold_units": clearing.get("unsold_units"),
        },
        "final_losses": {p: last_metric[p] for p in providers if p in last_metric},
    }
    return summary


def dumps(summary) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
