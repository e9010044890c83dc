"""Normalized criterion scores and their weighted-sum aggregate.

Each criterion maps a feasible offer-order pair onto [0, 100]; the aggregate
is the weighted sum that becomes the arc's per-unit objective coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .feasibility import FeasibleArc
from .model import ArcScores, Offer, Order, Weights

#: One-year normalization window for the expiry-gap score (days).
FRESHNESS_WINDOW_DAYS = 365.0

#: Distance at which the decay score reaches exactly 1.0 (km).
DISTANCE_UPPER_BOUND_KM = 1400.0

_DECAY_RATE = math.log(100.0) / DISTANCE_UPPER_BOUND_KM


def score_price(p_i: float, p_j: float) -> float:
    """Similarity of offer and order unit prices: 100 at equality, 0 when one is zero."""
    top = max(p_i, p_j)
    if top <= 0.0:
        return 100.0  # zero-deviation convention; unreachable for validated entities
    return 100.0 * (1.0 - abs(p_i - p_j) / top)


def score_quantity(q_i: float, q_j: float) -> float:
    """Similarity of remaining offer and order quantities, same form as score_price."""
    top = max(q_i, q_j)
    if top <= 0.0:
        return 100.0
    return 100.0 * (1.0 - abs(q_i - q_j) / top)


def score_freshness_days(days_gap: float) -> float:
    """Expiry-gap score normalized over one year, clamped into [0, 100].

    Feasible arcs have a gap of at least one day (offer outlives order
    strictly), so the upper clamp only matters for diagnostic scoring of
    infeasible pairs.
    """
    raw = 100.0 * (1.0 - days_gap / FRESHNESS_WINDOW_DAYS)
    return min(100.0, max(0.0, raw))


def score_freshness(offer_expiry, order_expiry) -> float:
    """Expiry-gap score from the two expiry dates (whole calendar days)."""
    return score_freshness_days((offer_expiry - order_expiry).days)


def score_distance(d_km: float) -> float:
    """Exponential distance decay: 100 at zero, exactly 1.0 at 1400 km."""
    return 100.0 * math.exp(-_DECAY_RATE * d_km)


def aggregate(scores: Sequence[float], weights: Weights) -> float:
    """Weighted sum of the four criterion scores (price, quantity, freshness, distance).

    Linear in the weights, so scaling all weights by c scales the result by c.
    """
    s_price, s_quantity, s_freshness, s_distance = scores
    return (weights.price * s_price + weights.quantity * s_quantity
            + weights.expiry * s_freshness + weights.distance * s_distance)


@dataclass(frozen=True)
class ScoredArc:
    """A feasible arc with its per-criterion scores and aggregate benefit."""

    arc: FeasibleArc
    scores: ArcScores

    @property
    def offer_id(self) -> str:
        return self.arc.offer_id

    @property
    def order_id(self) -> str:
        return self.arc.order_id

    @property
    def aggregate(self) -> float:
        return self.scores.aggregate


def score_arc(arc: FeasibleArc, offer: Offer, order: Order, weights: Weights) -> ScoredArc:
    """Score one feasible arc against the current (residual) entity state."""
    s_price = score_price(offer.price_per_unit, order.price_per_unit)
    s_quantity = score_quantity(offer.quantity, order.quantity)
    s_freshness = score_freshness(offer.expiry_date, order.expiry_date)
    s_distance = score_distance(arc.distance_km)
    agg = aggregate((s_price, s_quantity, s_freshness, s_distance), weights)
    return ScoredArc(arc, ArcScores(s_price, s_quantity, s_freshness, s_distance, agg))


def score_arcs(
    arcs: Sequence[FeasibleArc],
    offers: Sequence[Offer],
    orders: Sequence[Order],
    weights: Weights,
) -> list[ScoredArc]:
    """Score every arc; quantity similarity uses the entities' remaining quantities."""
    offers_by_id = {o.id: o for o in offers}
    orders_by_id = {o.id: o for o in orders}
    return [score_arc(arc, offers_by_id[arc.offer_id], orders_by_id[arc.order_id], weights)
            for arc in arcs]
