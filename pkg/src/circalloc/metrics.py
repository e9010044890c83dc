"""Aggregate and per-participant metrics over an allocation result.

Definitions are fixed here rather than configurable:

* fulfilment classes use the full allocated quantity across all iterations;
* counterpart counts and allocation ratios include unmatched participants
  (zero rows), while unit price, total distance, and expiry gap are only
  defined for matched participants and report those subsets;
* per-participant distance is the SUM of its flow distances, so a buyer
  sourcing from many suppliers accumulates transport burden;
* unit price and expiry gap are quantity-weighted means over flows;
* sd is the sample standard deviation, skewness the adjusted
  Fisher-Pearson coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .engine import AllocationResult, EngineConfig, run_to_termination
from .geo import PostcodeIndex
from .model import Offer, Order, Weights

#: Priority settings evaluated by the strategy suite, keyed by CLI name.
STRATEGIES: dict[str, Weights] = {
    "equal": Weights(0.25, 0.25, 0.25, 0.25),
    "price-first": Weights(0.55, 0.15, 0.15, 0.15),
    "quantity-first": Weights(0.15, 0.55, 0.15, 0.15),
    "expiry-first": Weights(0.15, 0.15, 0.55, 0.15),
    "distance-first": Weights(0.15, 0.15, 0.15, 0.55),
    "price-extreme": Weights(0.80, 0.05, 0.05, 0.10),
    "distance-extreme": Weights(0.10, 0.05, 0.05, 0.80),
}

#: Column labels used in comparison tables, in suite order.
STRATEGY_LABELS: dict[str, str] = {
    "equal": "Eq",
    "price-first": "Price",
    "quantity-first": "Qty",
    "expiry-first": "Expiry",
    "distance-first": "Dist",
    "price-extreme": "PriceX",
    "distance-extreme": "DistX",
}

FULL_TOL = 1e-6
ZERO_TOL = 1e-9


@dataclass
class StatRow:
    """Summary of one per-participant metric; absent (n=0) rows carry no stats."""

    n: int
    mean: Optional[float]
    sd: Optional[float]
    skew: Optional[float]

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "StatRow":
        n = len(values)
        if n == 0:
            return cls(0, None, None, None)
        arr = np.asarray(values, dtype=float)
        mean = float(arr.mean())
        sd = float(arr.std(ddof=1)) if n >= 2 else None
        skew = float(stats.skew(arr, bias=False)) if n >= 3 else None
        return cls(n, mean, sd, skew)

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "sd": self.sd, "skew": self.skew}


@dataclass
class SideDistribution:
    counterpart: StatRow
    allocation_ratio: StatRow
    unit_price: StatRow
    distance_total: StatRow
    expiry_gap: StatRow

    def to_dict(self) -> dict:
        return {name: getattr(self, name).to_dict()
                for name in ("counterpart", "allocation_ratio", "unit_price",
                             "distance_total", "expiry_gap")}


@dataclass
class MetricSuite:
    strategy: str
    weights: Weights
    orders_total: int
    orders_fully_met: int
    orders_partially_met: int
    orders_unmet: int
    offers_total: int
    offers_fully_met: int
    offers_partially_met: int
    offers_unmet: int
    total_demand_t: float
    total_supply_t: float
    allocation_first_iteration_t: float
    allocation_termination_t: float
    utilisation_first_pct: float
    utilisation_termination_pct: float
    circulated_pct: float
    leftover_pct: float
    iterations_run: int
    orders_dist: SideDistribution
    offers_dist: SideDistribution

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "weights": {"price": self.weights.price,
                        "quantity": self.weights.quantity,
                        "expiry": self.weights.expiry,
                        "distance": self.weights.distance},
            "aggregate": {
                "orders_total": self.orders_total,
                "orders_fully_met": self.orders_fully_met,
                "orders_partially_met": self.orders_partially_met,
                "orders_unmet": self.orders_unmet,
                "offers_total": self.offers_total,
                "offers_fully_met": self.offers_fully_met,
                "offers_partially_met": self.offers_partially_met,
                "offers_unmet": self.offers_unmet,
                "total_demand_t": self.total_demand_t,
                "total_supply_t": self.total_supply_t,
                "allocation_first_iteration_t": self.allocation_first_iteration_t,
                "allocation_termination_t": self.allocation_termination_t,
                "utilisation_first_pct": self.utilisation_first_pct,
                "utilisation_termination_pct": self.utilisation_termination_pct,
                "circulated_pct": self.circulated_pct,
                "leftover_pct": self.leftover_pct,
                "iterations_run": self.iterations_run,
            },
            "orders": self.orders_dist.to_dict(),
            "offers": self.offers_dist.to_dict(),
            "metadata": {
                "zero_rows_included": ["counterpart", "allocation_ratio"],
                "matched_only": ["unit_price", "distance_total", "expiry_gap"],
            },
        }


def _classify(allocated: float, requested: float) -> str:
    if allocated <= ZERO_TOL:
        return "unmet"
    if allocated >= requested - FULL_TOL:
        return "full"
    return "partial"


def _side_distribution(
    participants: Sequence[str],
    requested: dict[str, float],
    allocated: dict[str, float],
    counterparts: dict[str, set[str]],
    price_weight: dict[str, float],
    distance_sum: dict[str, float],
    gap_weight: dict[str, float],
) -> SideDistribution:
    counterpart_counts = [float(len(counterparts.get(p, set()))) for p in participants]
    ratios = [allocated.get(p, 0.0) / requested[p] for p in participants]
    matched = [p for p in participants if allocated.get(p, 0.0) > ZERO_TOL]
    unit_prices = [price_weight[p] / allocated[p] for p in matched]
    distances = [distance_sum[p] for p in matched]
    gaps = [gap_weight[p] / allocated[p] for p in matched]
    return SideDistribution(
        counterpart=StatRow.from_values(counterpart_counts),
        allocation_ratio=StatRow.from_values(ratios),
        unit_price=StatRow.from_values(unit_prices),
        distance_total=StatRow.from_values(distances),
        expiry_gap=StatRow.from_values(gaps),
    )


def compute_metrics(
    result: AllocationResult,
    offers: Sequence[Offer],
    orders: Sequence[Order],
    strategy: str = "",
    weights: Weights = Weights(0.25, 0.25, 0.25, 0.25),
) -> MetricSuite:
    """Full aggregate and distributional metric suite for one completed run."""
    offers_by_id = {o.id: o for o in offers}
    orders_by_id = {o.id: o for o in orders}

    offer_alloc: dict[str, float] = {}
    order_alloc: dict[str, float] = {}
    offer_partners: dict[str, set[str]] = {}
    order_partners: dict[str, set[str]] = {}
    offer_price_w: dict[str, float] = {}
    order_price_w: dict[str, float] = {}
    offer_dist: dict[str, float] = {}
    order_dist: dict[str, float] = {}
    offer_gap_w: dict[str, float] = {}
    order_gap_w: dict[str, float] = {}

    for flow in result.flows:
        days_gap = (offers_by_id[flow.offer_id].expiry_date
                    - orders_by_id[flow.order_id].expiry_date).days
        offer_alloc[flow.offer_id] = offer_alloc.get(flow.offer_id, 0.0) + flow.quantity
        order_alloc[flow.order_id] = order_alloc.get(flow.order_id, 0.0) + flow.quantity
        offer_partners.setdefault(flow.offer_id, set()).add(flow.order_id)
        order_partners.setdefault(flow.order_id, set()).add(flow.offer_id)
        offer_price_w[flow.offer_id] = (offer_price_w.get(flow.offer_id, 0.0)
                                        + flow.transaction_price * flow.quantity)
        order_price_w[flow.order_id] = (order_price_w.get(flow.order_id, 0.0)
                                        + flow.transaction_price * flow.quantity)
        offer_dist[flow.offer_id] = offer_dist.get(flow.offer_id, 0.0) + flow.distance_km
        order_dist[flow.order_id] = order_dist.get(flow.order_id, 0.0) + flow.distance_km
        offer_gap_w[flow.offer_id] = (offer_gap_w.get(flow.offer_id, 0.0)
                                      + days_gap * flow.quantity)
        order_gap_w[flow.order_id] = (order_gap_w.get(flow.order_id, 0.0)
                                      + days_gap * flow.quantity)

    order_classes = {o.id: _classify(order_alloc.get(o.id, 0.0), o.quantity)
                     for o in orders}
    offer_classes = {o.id: _classify(offer_alloc.get(o.id, 0.0), o.quantity)
                     for o in offers}

    total_supply = sum(o.quantity for o in offers)
    total_demand = sum(o.quantity for o in orders)
    total_alloc = result.total_allocated
    first_alloc = result.allocated_in_iteration(1)
    later_alloc = total_alloc - first_alloc
    utilisation = 100.0 * total_alloc / total_supply if total_supply else 0.0
    utilisation_first = 100.0 * first_alloc / total_supply if total_supply else 0.0
    circulated = 100.0 * later_alloc / total_supply if total_supply else 0.0

    orders_dist = _side_distribution(
        [o.id for o in orders], {o.id: o.quantity for o in orders},
        order_alloc, order_partners, order_price_w, order_dist, order_gap_w)
    offers_dist = _side_distribution(
        [o.id for o in offers], {o.id: o.quantity for o in offers},
        offer_alloc, offer_partners, offer_price_w, offer_dist, offer_gap_w)

    return MetricSuite(
        strategy=strategy,
        weights=weights,
        orders_total=len(orders),
        orders_fully_met=sum(1 for c in order_classes.values() if c == "full"),
        orders_partially_met=sum(1 for c in order_classes.values() if c == "partial"),
        orders_unmet=sum(1 for c in order_classes.values() if c == "unmet"),
        offers_total=len(offers),
        offers_fully_met=sum(1 for c in offer_classes.values() if c == "full"),
        offers_partially_met=sum(1 for c in offer_classes.values() if c == "partial"),
        offers_unmet=sum(1 for c in offer_classes.values() if c == "unmet"),
        total_demand_t=total_demand,
        total_supply_t=total_supply,
        allocation_first_iteration_t=first_alloc,
        allocation_termination_t=total_alloc,
        utilisation_first_pct=utilisation_first,
        utilisation_termination_pct=utilisation,
        circulated_pct=circulated,
        leftover_pct=100.0 - utilisation,
        iterations_run=len(result.iterations),
        orders_dist=orders_dist,
        offers_dist=offers_dist,
    )


def run_strategy_suite(
    offers: Sequence[Offer],
    orders: Sequence[Order],
    index: PostcodeIndex,
    config: EngineConfig,
    strategies: Optional[dict[str, Weights]] = None,
) -> dict[str, tuple[MetricSuite, AllocationResult]]:
    """Run every priority setting from identical initial data."""
    strategies = strategies if strategies is not None else STRATEGIES
    out: dict[str, tuple[MetricSuite, AllocationResult]] = {}
    for name, weights in strategies.items():
        result = run_to_termination(offers, orders, weights, config, index)
        suite = compute_metrics(result, offers, orders, strategy=name, weights=weights)
        out[name] = (suite, result)
    return out


COMPARISON_ROWS = [
    ("orders_fully_met", lambda s: s.orders_fully_met),
    ("orders_partially_met", lambda s: s.orders_partially_met),
    ("orders_unmet", lambda s: s.orders_unmet),
    ("offers_fully_met", lambda s: s.offers_fully_met),
    ("offers_partially_met", lambda s: s.offers_partially_met),
    ("offers_unmet", lambda s: s.offers_unmet),
    ("total_demand_t", lambda s: s.total_demand_t),
    ("total_supply_t", lambda s: s.total_supply_t),
    ("allocation_first_iteration_t", lambda s: s.allocation_first_iteration_t),
    ("utilisation_first_pct", lambda s: s.utilisation_first_pct),
    ("allocation_termination_t", lambda s: s.allocation_termination_t),
    ("utilisation_termination_pct", lambda s: s.utilisation_termination_pct),
    ("circulated_pct", lambda s: s.circulated_pct),
    ("leftover_pct", lambda s: s.leftover_pct),
    ("iterations_run", lambda s: s.iterations_run),
    ("orders.counterpart.mean", lambda s: s.orders_dist.counterpart.mean),
    ("orders.allocation_ratio.mean", lambda s: s.orders_dist.allocation_ratio.mean),
    ("orders.unit_price.mean", lambda s: s.orders_dist.unit_price.mean),
    ("orders.distance_total.mean", lambda s: s.orders_dist.distance_total.mean),
    ("orders.expiry_gap.mean", lambda s: s.orders_dist.expiry_gap.mean),
    ("offers.counterpart.mean", lambda s: s.offers_dist.counterpart.mean),
    ("offers.allocation_ratio.mean", lambda s: s.offers_dist.allocation_ratio.mean),
    ("offers.unit_price.mean", lambda s: s.offers_dist.unit_price.mean),
    ("offers.distance_total.mean", lambda s: s.offers_dist.distance_total.mean),
    ("offers.expiry_gap.mean", lambda s: s.offers_dist.expiry_gap.mean),
]


def comparison_table(suites: dict[str, MetricSuite]) -> list[list[str]]:
    """Rows for comparison.csv: one metric per row, one column per strategy."""
    names = [n for n in STRATEGIES if n in suites]
    names += [n for n in suites if n not in names]
    header = ["metric"] + [STRATEGY_LABELS.get(n, n) for n in names]
    rows = [header]
    for label, getter in COMPARISON_ROWS:
        row = [label]
        for name in names:
            value = getter(suites[name])
            row.append("" if value is None else repr(float(value)))
        rows.append(row)
    return rows


def summary_lines(suites: dict[str, MetricSuite]) -> list[str]:
    """Human-readable per-strategy digest."""
    lines = []
    for name, suite in suites.items():
        label = STRATEGY_LABELS.get(name, name)
        dist = suite.orders_dist.distance_total.mean
        gap = suite.orders_dist.expiry_gap.mean
        lines.append(
            f"{label:>7}: utilisation {suite.utilisation_termination_pct:6.2f}% "
            f"(circulated {suite.circulated_pct:.2f}%), "
            f"fully met orders {suite.orders_fully_met:3d}, unmet offers "
            f"{suite.offers_unmet:3d}, mean order distance "
            f"{dist if dist is None else round(dist, 1)} km, mean expiry gap "
            f"{gap if gap is None else round(gap, 2)} d, "
            f"iterations {suite.iterations_run}")
    return lines
