"""Feasible arc construction with per-pair rejection reasons.

The six hard checks run in a fixed order so the recorded reason for a
rejected pair is deterministic; the first failing check wins.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Sequence

from .geo import GeoPoint, PostcodeIndex, haversine_km
from .model import Offer, Order, QTY_TOL, ReasonCode


@dataclass(frozen=True)
class FeasibleArc:
    """A matchable offer-order pair with its flow bounds and shipping distance."""

    offer_id: str
    order_id: str
    upper_bound: float   # min of the two remaining quantities, tonnes
    lower_bound: float   # minimum trade quantity, tonnes
    distance_km: float


@dataclass(frozen=True)
class RejectionRecord:
    offer_id: str
    order_id: str
    reason: ReasonCode
    detail: str


def _first_failure(offer: Offer, order: Order) -> tuple[ReasonCode, str] | None:
    if offer.product_id != order.product_id:
        return ReasonCode.PRODUCT_MISMATCH, (
            f"offer product {offer.product_id!r} != order product {order.product_id!r}")
    if not (offer.valid_from <= order.fulfill_date <= offer.valid_until):
        return ReasonCode.TIME_WINDOW, (
            f"fulfill date {order.fulfill_date} outside offer validity "
            f"[{offer.valid_from}, {offer.valid_until}]")
    if not offer.expiry_date > order.expiry_date:
        return ReasonCode.EXPIRY, (
            f"offer expiry {offer.expiry_date} not strictly after "
            f"required expiry {order.expiry_date}")
    if offer.collection_only and order.delivery_only:
        return ReasonCode.LOGISTICS, "collection-only offer vs delivery-only order"
    tradable = min(offer.quantity, order.quantity)
    min_trade = max(offer.min_quantity, order.min_quantity)
    if tradable <= QTY_TOL:
        return ReasonCode.QUANTITY, "no remaining tradable quantity"
    if tradable < min_trade - QTY_TOL:
        return ReasonCode.QUANTITY, (
            f"tradable quantity {tradable:.6g} t below minimum trade {min_trade:.6g} t")
    if offer.min_price_per_unit > order.max_price_per_unit + QTY_TOL:
        return ReasonCode.PRICE, (
            f"seller floor {offer.min_price_per_unit:.6g} above "
            f"buyer ceiling {order.max_price_per_unit:.6g}")
    return None


def match(
    offer: Offer,
    order: Order,
    reference_date: date,
    index: PostcodeIndex,
) -> FeasibleArc | RejectionRecord:
    """Classify one pair; returns a FeasibleArc iff all six checks pass.

    ``reference_date`` is the scenario date; it does not participate in the
    pair checks (fulfilment timing relative to it is left to callers) but is
    part of the signature so the classification context is explicit.
    """
    failure = _first_failure(offer, order)
    if failure is not None:
        reason, detail = failure
        return RejectionRecord(offer.id, order.id, reason, detail)
    distance = haversine_km(index.resolve(offer.collection_postcode),
                            index.resolve(order.delivery_postcode))
    upper = min(offer.quantity, order.quantity)
    return FeasibleArc(
        offer_id=offer.id,
        order_id=order.id,
        upper_bound=upper,
        lower_bound=min(max(offer.min_quantity, order.min_quantity), upper),
        distance_km=distance,
    )


def build_arcs(
    offers: Sequence[Offer],
    orders: Sequence[Order],
    reference_date: date,
    index: PostcodeIndex,
    diagnostics: bool = True,
) -> tuple[list[FeasibleArc], list[RejectionRecord]]:
    """Classify every offer-order pair into exactly one of arcs or rejections.

    Output is ordered lexicographically by (offer_id, order_id). Postcodes are
    resolved once per entity up front so an unknown code fails loudly even if
    all of that entity's pairs are rejected.
    """
    offers_sorted = sorted(offers, key=lambda o: o.id)
    orders_sorted = sorted(orders, key=lambda o: o.id)
    offer_points: dict[str, GeoPoint] = {
        o.id: index.resolve(o.collection_postcode) for o in offers_sorted}
    order_points: dict[str, GeoPoint] = {
        o.id: index.resolve(o.delivery_postcode) for o in orders_sorted}

    arcs: list[FeasibleArc] = []
    rejections: list[RejectionRecord] = []
    for offer in offers_sorted:
        for order in orders_sorted:
            failure = _first_failure(offer, order)
            if failure is None:
                upper = min(offer.quantity, order.quantity)
                arcs.append(FeasibleArc(
                    offer_id=offer.id,
                    order_id=order.id,
                    upper_bound=upper,
                    lower_bound=min(max(offer.min_quantity, order.min_quantity), upper),
                    distance_km=haversine_km(offer_points[offer.id],
                                             order_points[order.id]),
                ))
            elif diagnostics:
                rejections.append(RejectionRecord(offer.id, order.id, *failure))
    return arcs, rejections
