"""Iterative allocation: solve, subtract, circulate leftovers, diagnose.

Each iteration re-runs arc construction, scoring, and the MILP on residual
quantities. Non-expired leftover supply re-enters the next round; expired
supply is flagged for downgrading instead of being silently dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Optional, Sequence

from .feasibility import RejectionRecord, build_arcs
from .geo import PostcodeIndex, haversine_km
from .milp import MilpConfig, SolveReport, solve
from .model import Flow, Offer, Order, ReasonCode, Weights, subtract_flows
from .scoring import (aggregate, score_arcs, score_distance, score_freshness_days,
                      score_price, score_quantity)

log = logging.getLogger("circalloc.engine")

#: Reroute label attached to expired, unallocated supply.
EXPIRED_REROUTE_LABEL = "downgrade: processing-grade"


@dataclass(frozen=True)
class EngineConfig:
    reference_date: date
    max_iterations: int = 5
    milp: MilpConfig = MilpConfig()
    diagnostics: bool = True


@dataclass
class IterationRecord:
    index: int                    # 1-based
    flows: list[Flow]
    allocated_tonnes: float
    residual_offer_count: int
    residual_order_count: int
    terminated: bool              # True when this iteration allocated nothing
    solver_status: str
    rejections: list[RejectionRecord] = field(default_factory=list)
    solve_report: Optional[SolveReport] = None


@dataclass(frozen=True)
class ExpiredOffer:
    offer: Offer
    reroute_label: str


@dataclass
class LeftoverDiagnostic:
    """Mean criterion scores of a leftover offer against all remaining orders."""

    offer_id: str
    remaining_tonnes: float
    mean_price: Optional[float]
    mean_quantity: Optional[float]
    mean_freshness: Optional[float]
    mean_distance: Optional[float]
    mean_aggregate: Optional[float]
    dominant_reason: Optional[ReasonCode]   # None when no orders remain


@dataclass
class AllocationResult:
    iterations: list[IterationRecord]
    flows: list[Flow]
    leftover_offers: list[Offer]
    expired_offers: list[ExpiredOffer]
    residual_orders: list[Order]
    rejections: list[RejectionRecord]
    leftover_diagnostics: list[LeftoverDiagnostic]

    @property
    def total_allocated(self) -> float:
        return sum(f.quantity for f in self.flows)

    def allocated_in_iteration(self, index: int) -> float:
        return sum(f.quantity for f in self.flows if f.iteration == index)


def transaction_price(offer: Offer, order: Order) -> float:
    """Midpoint of the two listed prices, clamped into the feasible band.

    Price formation is a modeling choice: the midpoint is the simplest
    symmetric rule, and the clamp keeps the result acceptable to both sides.
    """
    mid = 0.5 * (offer.price_per_unit + order.price_per_unit)
    return min(max(mid, offer.min_price_per_unit), order.max_price_per_unit)


def run_iteration(
    offers: Sequence[Offer],
    orders: Sequence[Order],
    weights: Weights,
    config: EngineConfig,
    index: PostcodeIndex,
    iteration: int,
) -> tuple[IterationRecord, list[Offer], list[Order]]:
    """One allocation round on the current residuals."""
    arcs, rejections = build_arcs(offers, orders, config.reference_date, index,
                                  diagnostics=config.diagnostics)
    scored = score_arcs(arcs, offers, orders, weights)
    report = solve(offers, orders, scored, config.milp)

    offers_by_id = {o.id: o for o in offers}
    orders_by_id = {o.id: o for o in orders}
    flows = [
        Flow(
            iteration=iteration,
            offer_id=alloc.arc.offer_id,
            order_id=alloc.arc.order_id,
            quantity=alloc.quantity,
            transaction_price=transaction_price(offers_by_id[alloc.arc.offer_id],
                                                orders_by_id[alloc.arc.order_id]),
            distance_km=alloc.arc.arc.distance_km,
            scores=alloc.arc.scores,
        )
        for alloc in report.allocations
    ]
    if config.diagnostics:
        for arc in report.pruned:
            rejections.append(RejectionRecord(
                arc.offer_id, arc.order_id, ReasonCode.PRUNED,
                f"outside top-{config.milp.top_k} candidates on both sides"))
        for arc in report.screened:
            rejections.append(RejectionRecord(
                arc.offer_id, arc.order_id, ReasonCode.SCREENED,
                f"relaxed flow below {config.milp.screen_epsilon} t"))

    residual_offers, residual_orders = subtract_flows(offers, orders, flows)
    allocated = sum(f.quantity for f in flows)
    record = IterationRecord(
        index=iteration,
        flows=flows,
        allocated_tonnes=allocated,
        residual_offer_count=len(residual_offers),
        residual_order_count=len(residual_orders),
        terminated=not flows,
        solver_status=report.status,
        rejections=rejections,
        solve_report=report,
    )
    log.info("iteration %d: %d flows, %.1f t allocated, status %s",
             iteration, len(flows), allocated, report.status)
    return record, residual_offers, residual_orders


def circulate(
    leftover_offers: Sequence[Offer],
    reference_date: date,
) -> tuple[list[Offer], list[ExpiredOffer]]:
    """Split leftovers into carried-forward supply and expired-flagged supply."""
    carried: list[Offer] = []
    expired: list[ExpiredOffer] = []
    for offer in leftover_offers:
        if offer.expiry_date > reference_date:
            carried.append(offer)
        else:
            expired.append(ExpiredOffer(offer, EXPIRED_REROUTE_LABEL))
    return carried, expired


def run_to_termination(
    offers: Sequence[Offer],
    orders: Sequence[Order],
    weights: Weights,
    config: EngineConfig,
    index: PostcodeIndex,
) -> AllocationResult:
    """Iterate allocation rounds until a zero-flow round or the iteration cap."""
    if config.max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    weights.require_normalized()

    current_offers = list(offers)
    current_orders = list(orders)
    records: list[IterationRecord] = []
    all_flows: list[Flow] = []
    all_rejections: list[RejectionRecord] = []
    expired: list[ExpiredOffer] = []

    for iteration in range(1, config.max_iterations + 1):
        record, residual_offers, residual_orders = run_iteration(
            current_offers, current_orders, weights, config, index, iteration)
        records.append(record)
        all_flows.extend(record.flows)
        all_rejections.extend(record.rejections)
        if record.terminated:
            current_offers = residual_offers
            current_orders = residual_orders
            break
        carried, newly_expired = circulate(residual_offers, config.reference_date)
        expired.extend(newly_expired)
        current_offers = carried
        current_orders = residual_orders

    diagnostics = leftover_diagnostics(
        current_offers, current_orders, weights, index,
        last_rejections=records[-1].rejections if records else [])
    return AllocationResult(
        iterations=records,
        flows=all_flows,
        leftover_offers=current_offers,
        expired_offers=expired,
        residual_orders=current_orders,
        rejections=all_rejections,
        leftover_diagnostics=diagnostics,
    )


def leftover_diagnostics(
    leftover_offers: Sequence[Offer],
    orders: Sequence[Order],
    weights: Weights,
    index: PostcodeIndex,
    last_rejections: Sequence[RejectionRecord] = (),
) -> list[LeftoverDiagnostic]:
    """Why is this supply still here? Mean criterion scores plus the modal reason.

    Scores are taken against every remaining order regardless of feasibility
    (price bounds ignored; freshness clamped into [0, 100]), which surfaces
    the criterion that is systematically blocking the leftover.
    """
    reasons_by_offer: dict[str, list[ReasonCode]] = {}
    for rec in last_rejections:
        reasons_by_offer.setdefault(rec.offer_id, []).append(rec.reason)

    order_points = {o.id: index.resolve(o.delivery_postcode) for o in orders}
    diagnostics: list[LeftoverDiagnostic] = []
    for offer in sorted(leftover_offers, key=lambda o: o.id):
        if not orders:
            diagnostics.append(LeftoverDiagnostic(
                offer.id, offer.quantity, None, None, None, None, None, None))
            continue
        point = index.resolve(offer.collection_postcode)
        s_price = s_qty = s_fresh = s_dist = 0.0
        for order in orders:
            s_price += score_price(offer.price_per_unit, order.price_per_unit)
            s_qty += score_quantity(offer.quantity, order.quantity)
            s_fresh += score_freshness_days((offer.expiry_date - order.expiry_date).days)
            s_dist += score_distance(haversine_km(point, order_points[order.id]))
        n = len(orders)
        means = (s_price / n, s_qty / n, s_fresh / n, s_dist / n)
        mean_agg = aggregate(means, weights)
        reasons = reasons_by_offer.get(offer.id, [])
        dominant = None
        if reasons:
            counts: dict[ReasonCode, int] = {}
            for reason in reasons:
                counts[reason] = counts.get(reason, 0) + 1
            dominant = max(counts, key=lambda r: (counts[r], r.value))
        diagnostics.append(LeftoverDiagnostic(
            offer.id, offer.quantity, *means, mean_agg, dominant))
    return diagnostics
