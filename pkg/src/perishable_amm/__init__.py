"""Automated market maker for perishable assets.

Providers steer a power-family price curve through a share-weighted
geometric mean of their constants. Buyers can rest escrowed, increase-only
bids. Before the goods expire the remaining inventory is cleared by a Dutch
auction or a greedy auction-graph matching.
"""

from .clearing import (
    build_auction_graph,
    clear_market,
    dutch_auction,
    exact_max_weight_matching,
    greedy_matching,
    residual_clearing,
    settle_matching,
)
from .curve import (
    AxiomReport,
    Bounds,
    CurveParams,
    GridSpec,
    PoolState,
    check_amm_axioms,
    cost_to_buy_units,
    evaluate,
    proceeds_to_sell_units,
    rebase,
    slippage,
    spot_price,
    surface,
)
from .loss import LossSnapshot, divergence_loss, dl_sensitivity, min_profit, order_loss, second_price
from .orders import Bid, OrderBook, UnitListing
from .pool import EpochSchedule, LiquidityProvider, Pool, aggregate_constant

__version__ = "0.1.0"

__all__ = [
    "AxiomReport", "Bid", "Bounds", "CurveParams", "EpochSchedule", "GridSpec", "LiquidityProvider",
    "LossSnapshot", "OrderBook", "Pool", "PoolState", "UnitListing", "aggregate_constant",
    "build_auction_graph", "check_amm_axioms", "clear_market", "cost_to_buy_units", "divergence_loss",
    "dl_sensitivity", "dutch_auction", "evaluate", "exact_max_weight_matching", "greedy_matching",
    "min_profit", "order_loss", "proceeds_to_sell_units", "rebase", "residual_clearing",
    "second_price", "settle_matching", "slippage", "spot_price", "surface",
]
