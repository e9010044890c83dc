"""Domain entities for the trading allocation engine.

Offers are seller-side supply lots, orders are buyer-side demand, and flows
record allocated quantity on a matched pair. All entities are immutable after
validation; residual bookkeeping produces new instances.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from datetime import date, datetime
from enum import Enum
from typing import Iterable, Mapping, Sequence

#: Absolute tolerance for quantity/price comparisons throughout the engine.
QTY_TOL = 1e-9


class ReasonCode(Enum):
    """Primary reason a candidate offer-order pair was rejected."""

    PRODUCT_MISMATCH = "PRODUCT_MISMATCH"
    TIME_WINDOW = "TIME_WINDOW"
    EXPIRY = "EXPIRY"
    LOGISTICS = "LOGISTICS"
    QUANTITY = "QUANTITY"
    PRICE = "PRICE"
    PRUNED = "PRUNED"
    SCREENED = "SCREENED"
    EXPIRED_SUPPLY = "EXPIRED_SUPPLY"


class ValidationError(ValueError):
    """A record failed entity validation.

    ``code`` is one of MISSING_FIELD, NEGATIVE_QUANTITY, MIN_EXCEEDS_MAX,
    BAD_DATE_ORDER; ``field`` names the offending column where applicable.
    """

    def __init__(self, code: str, field: str, message: str):
        super().__init__(f"{code} [{field}]: {message}")
        self.code = code
        self.field = field


class OverdrawError(RuntimeError):
    """Flows exceeded an entity's remaining quantity (internal inconsistency)."""


@dataclass(frozen=True)
class Offer:
    """Seller-side supply lot."""

    id: str
    seller_id: str
    product_id: str
    quantity: float            # tonnes remaining
    min_quantity: float        # minimum tradable tonnes
    price_per_unit: float      # GBP per tonne (listed)
    min_price_per_unit: float  # seller's floor
    production_date: date
    expiry_date: date
    valid_from: date
    valid_until: date
    collection_only: bool
    collection_postcode: str
    single_order: bool


@dataclass(frozen=True)
class Order:
    """Buyer-side demand record."""

    id: str
    buyer_id: str
    product_id: str
    quantity: float            # tonnes still requested
    min_quantity: float
    price_per_unit: float      # GBP per tonne (listed)
    max_price_per_unit: float  # buyer's ceiling
    expiry_date: date          # required product expiry
    fulfill_date: date
    delivery_only: bool
    delivery_postcode: str
    single_offer: bool


@dataclass(frozen=True)
class Weights:
    """Priority vector over the four matching criteria.

    Loaded strategy weights are normalized to sum to one; the raw constructor
    accepts any non-negative components so that scale-invariance properties of
    the scoring pipeline can be expressed directly.
    """

    price: float
    quantity: float
    expiry: float
    distance: float

    def components(self) -> tuple[float, float, float, float]:
        return (self.price, self.quantity, self.expiry, self.distance)

    def scaled(self, factor: float) -> "Weights":
        return Weights(self.price * factor, self.quantity * factor,
                       self.expiry * factor, self.distance * factor)

    def normalized(self) -> "Weights":
        total = sum(self.components())
        if total <= 0:
            raise ValueError("weights must have a positive sum")
        return self.scaled(1.0 / total)

    def require_normalized(self, tol: float = 1e-9) -> None:
        if any(c < 0 for c in self.components()):
            raise ValueError(f"weights must be non-negative: {self}")
        if abs(sum(self.components()) - 1.0) > tol:
            raise ValueError(f"weights must sum to 1 within {tol}: {self}")

    @classmethod
    def from_mapping(cls, raw: Mapping[str, float], normalize: bool = True) -> "Weights":
        """Build from a ``{"price": .., "quantity": .., "expiry": .., "distance": ..}`` mapping."""
        missing = {"price", "quantity", "expiry", "distance"} - set(raw)
        if missing:
            raise ValueError(f"weights mapping missing keys: {sorted(missing)}")
        w = cls(float(raw["price"]), float(raw["quantity"]),
                float(raw["expiry"]), float(raw["distance"]))
        if any(c < 0 for c in w.components()):
            raise ValueError(f"weights must be non-negative: {w}")
        if normalize:
            w = w.normalized()
        return w


@dataclass(frozen=True)
class ArcScores:
    """Per-criterion scores (each in [0, 100]) and their weighted aggregate."""

    price: float
    quantity: float
    freshness: float
    distance: float
    aggregate: float


@dataclass(frozen=True)
class Flow:
    """An allocated quantity on one arc in one iteration."""

    iteration: int
    offer_id: str
    order_id: str
    quantity: float
    transaction_price: float
    distance_km: float
    scores: ArcScores


_BOOL_STRINGS = {"true": True, "1": True, "yes": True,
                 "false": False, "0": False, "no": False, "": False}

_OFFER_FIELDS = ("id", "seller_id", "product_id", "quantity", "min_quantity",
                 "price_per_unit", "min_price_per_unit", "production_date",
                 "expiry_date", "valid_from", "valid_until", "collection_only",
                 "collection_postcode", "single_order")

_ORDER_FIELDS = ("id", "buyer_id", "product_id", "quantity", "min_quantity",
                 "price_per_unit", "max_price_per_unit", "expiry_date",
                 "fulfill_date", "delivery_only", "delivery_postcode",
                 "single_offer")


def _parse_float(raw: object, field: str) -> float:
    try:
        return float(raw)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise ValidationError("MISSING_FIELD", field, f"unparseable number: {raw!r}")


def _parse_date(raw: object, field: str) -> date:
    if isinstance(raw, date):
        return raw
    try:
        return datetime.strptime(str(raw), "%Y-%m-%d").date()
    except ValueError:
        raise ValidationError("MISSING_FIELD", field, f"unparseable ISO date: {raw!r}")


def _parse_bool(raw: object, field: str) -> bool:
    if isinstance(raw, bool):
        return raw
    key = str(raw).strip().lower()
    if key not in _BOOL_STRINGS:
        raise ValidationError("MISSING_FIELD", field, f"unparseable boolean: {raw!r}")
    return _BOOL_STRINGS[key]


def _require_fields(raw: Mapping[str, object], fields: Sequence[str]) -> None:
    for field in fields:
        if field not in raw or raw[field] is None or raw[field] == "":
            # empty string is acceptable only for booleans (falsy)
            if field not in raw or raw[field] is None:
                raise ValidationError("MISSING_FIELD", field, "field absent")


def _check_offer(offer: Offer) -> None:
    if offer.quantity < 0 or offer.min_quantity < 0:
        raise ValidationError("NEGATIVE_QUANTITY", "quantity",
                              f"offer {offer.id}: quantities must be non-negative")
    if offer.min_quantity > offer.quantity + QTY_TOL:
        raise ValidationError("MIN_EXCEEDS_MAX", "min_quantity",
                              f"offer {offer.id}: min_quantity {offer.min_quantity} > quantity {offer.quantity}")
    if offer.min_price_per_unit > offer.price_per_unit + QTY_TOL:
        raise ValidationError("MIN_EXCEEDS_MAX", "min_price_per_unit",
                              f"offer {offer.id}: min_price {offer.min_price_per_unit} > price {offer.price_per_unit}")
    if offer.valid_from > offer.valid_until:
        raise ValidationError("BAD_DATE_ORDER", "valid_from",
                              f"offer {offer.id}: valid_from after valid_until")
    if offer.production_date > offer.expiry_date:
        raise ValidationError("BAD_DATE_ORDER", "production_date",
                              f"offer {offer.id}: production_date after expiry_date")


def _check_order(order: Order) -> None:
    if order.quantity < 0 or order.min_quantity < 0:
        raise ValidationError("NEGATIVE_QUANTITY", "quantity",
                              f"order {order.id}: quantities must be non-negative")
    if order.min_quantity > order.quantity + QTY_TOL:
        raise ValidationError("MIN_EXCEEDS_MAX", "min_quantity",
                              f"order {order.id}: min_quantity {order.min_quantity} > quantity {order.quantity}")
    if order.price_per_unit > order.max_price_per_unit + QTY_TOL:
        raise ValidationError("MIN_EXCEEDS_MAX", "price_per_unit",
                              f"order {order.id}: price {order.price_per_unit} > max_price {order.max_price_per_unit}")
    if order.fulfill_date > order.expiry_date:
        raise ValidationError("BAD_DATE_ORDER", "fulfill_date",
                              f"order {order.id}: fulfill_date after expiry_date")


def validate_offer(raw: Mapping[str, object] | Offer) -> Offer:
    """Parse and validate an offer record; valid instances pass through unchanged."""
    if isinstance(raw, Offer):
        _check_offer(raw)
        return raw
    _require_fields(raw, _OFFER_FIELDS)
    offer = Offer(
        id=str(raw["id"]),
        seller_id=str(raw["seller_id"]),
        product_id=str(raw["product_id"]),
        quantity=_parse_float(raw["quantity"], "quantity"),
        min_quantity=_parse_float(raw["min_quantity"], "min_quantity"),
        price_per_unit=_parse_float(raw["price_per_unit"], "price_per_unit"),
        min_price_per_unit=_parse_float(raw["min_price_per_unit"], "min_price_per_unit"),
        production_date=_parse_date(raw["production_date"], "production_date"),
        expiry_date=_parse_date(raw["expiry_date"], "expiry_date"),
        valid_from=_parse_date(raw["valid_from"], "valid_from"),
        valid_until=_parse_date(raw["valid_until"], "valid_until"),
        collection_only=_parse_bool(raw["collection_only"], "collection_only"),
        collection_postcode=str(raw["collection_postcode"]),
        single_order=_parse_bool(raw["single_order"], "single_order"),
    )
    _check_offer(offer)
    return offer


def validate_order(raw: Mapping[str, object] | Order) -> Order:
    """Parse and validate an order record; valid instances pass through unchanged."""
    if isinstance(raw, Order):
        _check_order(raw)
        return raw
    _require_fields(raw, _ORDER_FIELDS)
    order = Order(
        id=str(raw["id"]),
        buyer_id=str(raw["buyer_id"]),
        product_id=str(raw["product_id"]),
        quantity=_parse_float(raw["quantity"], "quantity"),
        min_quantity=_parse_float(raw["min_quantity"], "min_quantity"),
        price_per_unit=_parse_float(raw["price_per_unit"], "price_per_unit"),
        max_price_per_unit=_parse_float(raw["max_price_per_unit"], "max_price_per_unit"),
        expiry_date=_parse_date(raw["expiry_date"], "expiry_date"),
        fulfill_date=_parse_date(raw["fulfill_date"], "fulfill_date"),
        delivery_only=_parse_bool(raw["delivery_only"], "delivery_only"),
        delivery_postcode=str(raw["delivery_postcode"]),
        single_offer=_parse_bool(raw["single_offer"], "single_offer"),
    )
    _check_order(order)
    return order


def subtract_flows(
    offers: Sequence[Offer],
    orders: Sequence[Order],
    flows: Iterable[Flow],
) -> tuple[list[Offer], list[Order]]:
    """Subtract allocated quantities and return residual offers/orders.

    Entities whose remaining quantity reaches zero are removed; min_quantity is
    clamped so a partially allocated entity stays tradable in later iterations.
    Raises OverdrawError if flows exceed an entity's remaining quantity.
    """
    offer_alloc: dict[str, float] = {}
    order_alloc: dict[str, float] = {}
    known_offers = {o.id for o in offers}
    known_orders = {o.id for o in orders}
    for flow in flows:
        if flow.offer_id not in known_offers:
            raise ValueError(f"flow references unknown offer {flow.offer_id}")
        if flow.order_id not in known_orders:
            raise ValueError(f"flow references unknown order {flow.order_id}")
        offer_alloc[flow.offer_id] = offer_alloc.get(flow.offer_id, 0.0) + flow.quantity
        order_alloc[flow.order_id] = order_alloc.get(flow.order_id, 0.0) + flow.quantity

    residual_offers: list[Offer] = []
    for offer in offers:
        taken = offer_alloc.get(offer.id, 0.0)
        remaining = offer.quantity - taken
        if remaining < -QTY_TOL:
            raise OverdrawError(
                f"offer {offer.id}: allocated {taken} exceeds remaining {offer.quantity}")
        if remaining <= QTY_TOL:
            continue
        residual_offers.append(dataclasses.replace(
            offer, quantity=remaining,
            min_quantity=min(offer.min_quantity, remaining)))

    residual_orders: list[Order] = []
    for order in orders:
        taken = order_alloc.get(order.id, 0.0)
        remaining = order.quantity - taken
        if remaining < -QTY_TOL:
            raise OverdrawError(
                f"order {order.id}: allocated {taken} exceeds remaining {order.quantity}")
        if remaining <= QTY_TOL:
            continue
        residual_orders.append(dataclasses.replace(
            order, quantity=remaining,
            min_quantity=min(order.min_quantity, remaining)))

    return residual_offers, residual_orders
