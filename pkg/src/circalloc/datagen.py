"""Seeded synthetic apple supply-chain datasets.

Replicates the derivation rules of the reference evaluation data: listed
quantities, postcodes, and unit prices are drawn to match the configured
summary statistics; minimum tradable quantities, price bounds, and temporal
windows follow the fixed derivation rules. The market structure is layered so
allocation behavior differentiates across priority settings:

* ten high-volume intake hubs absorb most demand tonnage; their minimum trade
  size keeps small lots out, and a few of them buy at discount price levels;
* a handful of northern mid-size processors require delivery, so only larger
  growers (who can ship) reach them;
* regular intake near the orchards is sized slightly below the small-lot
  supply that depends on it, so some small supply is always contested;
* a remote fringe of small early-expiring lots sits far from the packing
  belt, and a small share of premium-priced offers exceeds every buyer's
  ceiling and can never trade.

Generation is single-threaded and fully determined by the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .geo import PostcodeIndex
from .model import Offer, Order

#: County centroids (name, lat, lon) used as sampling anchors.
COUNTY_COORDS = {
    "Kent": (51.20, 0.70),
    "Herefordshire": (52.08, -2.75),
    "Worcestershire": (52.19, -2.22),
    "Somerset": (51.05, -2.95),
    "Suffolk": (52.19, 0.97),
    "Essex": (51.77, 0.47),
    "Norfolk": (52.61, 0.89),
    "Devon": (50.72, -3.53),
    "Cambridgeshire": (52.30, 0.05),
    "Gloucestershire": (51.86, -2.24),
    "Lincolnshire": (53.10, -0.40),
    "West Sussex": (50.92, -0.46),
    "County Durham": (54.78, -1.86),
    "Greater London": (51.51, -0.13),
    "West Midlands": (52.48, -1.90),
    "Greater Manchester": (53.48, -2.24),
    "West Yorkshire": (53.80, -1.55),
    "Avon": (51.45, -2.59),
}

#: Orchard concentration: production sits mostly in Kent and the Welsh Marches.
SUPPLY_COUNTY_WEIGHTS = {
    "Kent": 0.24, "Herefordshire": 0.18, "Worcestershire": 0.14,
    "Somerset": 0.09, "Suffolk": 0.08, "Essex": 0.07,
    "Cambridgeshire": 0.05, "Gloucestershire": 0.05, "West Sussex": 0.06,
    "Norfolk": 0.04,
}

#: Small growers far from the packing belt.
REMOTE_COUNTY_WEIGHTS = {
    "Lincolnshire": 0.40, "Norfolk": 0.35, "Devon": 0.25,
}

#: Regular intake (packers, juicers, local markets) clusters near the orchards.
REGULAR_DEMAND_COUNTY_WEIGHTS = {
    "Kent": 0.18, "Herefordshire": 0.11, "Worcestershire": 0.09,
    "Somerset": 0.07, "Essex": 0.09, "Suffolk": 0.06,
    "Cambridgeshire": 0.07, "Gloucestershire": 0.04, "West Sussex": 0.07,
    "Greater London": 0.10, "Avon": 0.06, "Lincolnshire": 0.06,
}

#: High-volume hubs buying at the core price level.
MEGA_CORE_COUNTY_WEIGHTS = {
    "West Midlands": 0.30, "Greater Manchester": 0.25,
    "West Yorkshire": 0.25, "Greater London": 0.20,
}

#: High-volume hubs buying at discount price levels, close to the south-east.
MEGA_DISCOUNT_COUNTY_WEIGHTS = {
    "Greater London": 0.60, "Avon": 0.40,
}

#: Mid-size processors in the far north; delivery required.
MID_DEMAND_COUNTY_WEIGHTS = {
    "Greater Manchester": 0.40, "West Yorkshire": 0.35, "County Durham": 0.25,
}


@dataclass(frozen=True)
class GenConfig:
    seed: int = 20251013
    n_orders: int = 118
    n_offers: int = 932
    demand_price_mean: float = 1061.2    # mean over all generated orders
    demand_price_sd: float = 42.56       # sd of the core buyer segment
    supply_price_mean: float = 1062.84   # mean of the tradable offer population
    supply_price_sd: float = 43.57
    total_demand: float = 505_198.0
    total_supply: float = 192_768.0
    order_expiry_anchor: date = date(2025, 10, 20)
    offer_expiry_anchor: date = date(2025, 10, 27)
    expiry_jitter_days: int = 7
    fulfill_lead_days: int = 7
    validity_start: date = date(2025, 1, 1)
    validity_end: date = date(2025, 12, 31)
    product_id: str = "edible"
    min_quantity_factor: float = 0.01
    offer_floor_range: tuple[float, float] = (0.80, 0.90)
    order_ceiling_range: tuple[float, float] = (1.10, 1.20)
    location_jitter_deg: float = 0.2
    # demand tiers
    mega_order_count: int = 10
    mega_discount_count: int = 3
    mega_demand_share: float = 0.7856
    mega_qty_sigma: float = 0.15
    mid_order_count: int = 4
    mid_demand_share: float = 0.0238
    mid_qty_sigma: float = 0.20
    regular_huge_count: int = 14
    regular_huge_share: float = 0.82      # of regular-tier capacity
    regular_tiny_sigma: float = 0.45
    regular_huge_sigma: float = 0.30
    budget_order_fraction: float = 0.20   # of regular orders
    budget_price_mean: float = 872.0
    budget_price_sd: float = 22.0
    # supply structure
    offer_qty_sigma: float = 0.95
    offer_max_size_t: float = 1500.0
    collection_cutoff_t: float = 280.0    # smaller lots are collection-only
    outlier_offer_fraction: float = 0.025
    outlier_price_multiplier: tuple[float, float] = (4.6, 6.0)
    remote_offer_fraction: float = 0.03
    remote_size_range: tuple[float, float] = (150.0, 270.0)
    remote_expiry_offsets: tuple[int, ...] = (-7, -6, -5)
    supply_counties: dict = field(default_factory=lambda: dict(SUPPLY_COUNTY_WEIGHTS))
    remote_counties: dict = field(default_factory=lambda: dict(REMOTE_COUNTY_WEIGHTS))
    regular_demand_counties: dict = field(
        default_factory=lambda: dict(REGULAR_DEMAND_COUNTY_WEIGHTS))
    mega_core_counties: dict = field(
        default_factory=lambda: dict(MEGA_CORE_COUNTY_WEIGHTS))
    mega_discount_counties: dict = field(
        default_factory=lambda: dict(MEGA_DISCOUNT_COUNTY_WEIGHTS))
    mid_demand_counties: dict = field(
        default_factory=lambda: dict(MID_DEMAND_COUNTY_WEIGHTS))

    def __post_init__(self):
        if self.n_orders <= 0 or self.n_offers <= 0:
            raise ValueError("entity counts must be positive")
        if self.demand_price_sd < 0 or self.supply_price_sd < 0:
            raise ValueError("price standard deviations must be non-negative")
        if self.mega_order_count + self.mid_order_count >= self.n_orders:
            raise ValueError("demand tiers must leave room for regular orders")
        if self.mega_discount_count > self.mega_order_count:
            raise ValueError("discount hubs cannot outnumber hubs")


@dataclass
class Dataset:
    offers: list[Offer]
    orders: list[Order]
    postcodes: list[tuple[str, float, float]]   # (code, lat, lon)

    def index(self) -> PostcodeIndex:
        return PostcodeIndex.from_rows(self.postcodes)


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float,
                      size: int, n_sigma: float = 4.0) -> np.ndarray:
    """Normal draws redrawn outside mean +/- n_sigma*sd (keeps prices positive)."""
    if sd == 0:
        return np.full(size, mean)
    values = rng.normal(mean, sd, size)
    lo, hi = mean - n_sigma * sd, mean + n_sigma * sd
    bad = (values < lo) | (values > hi)
    while np.any(bad):
        values[bad] = rng.normal(mean, sd, int(bad.sum()))
        bad = (values < lo) | (values > hi)
    return values


def _lognormal_to_total(rng: np.random.Generator, n: int, sigma: float,
                        total: float) -> np.ndarray:
    """Log-normal quantity shape rescaled so the draws sum exactly to total."""
    if n == 0:
        return np.zeros(0)
    draws = rng.lognormal(mean=0.0, sigma=sigma, size=n)
    return draws * (total / draws.sum())


def _sample_locations(rng: np.random.Generator, counties: dict, n: int,
                      jitter: float) -> np.ndarray:
    names = sorted(counties)
    weights = np.array([counties[name] for name in names], dtype=float)
    weights = weights / weights.sum()
    picks = rng.choice(len(names), size=n, p=weights)
    coords = np.array([COUNTY_COORDS[names[i]] for i in picks]).reshape(n, 2)
    coords += rng.uniform(-jitter, jitter, size=(n, 2))
    return coords


def _unique_hex_ids(rng: np.random.Generator, prefix: str, n: int) -> list[str]:
    seen: set[str] = set()
    ids: list[str] = []
    while len(ids) < n:
        token = f"{prefix}-{rng.integers(0, 16**8):08x}"
        if token not in seen:
            seen.add(token)
            ids.append(token)
    return ids


def generate(config: GenConfig) -> Dataset:
    """Generate a full offer/order/postcode dataset from the seed."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    postcodes: list[tuple[str, float, float]] = []

    # ---- orders -----------------------------------------------------------
    n = config.n_orders
    n_mega = config.mega_order_count
    n_mid = config.mid_order_count
    n_regular = n - n_mega - n_mid
    mega_total = config.mega_demand_share * config.total_demand
    mid_total = config.mid_demand_share * config.total_demand
    regular_total = config.total_demand - mega_total - mid_total

    mega_qty = _lognormal_to_total(rng, n_mega, config.mega_qty_sigma, mega_total)
    mid_qty = _lognormal_to_total(rng, n_mid, config.mid_qty_sigma, mid_total)
    n_huge = min(config.regular_huge_count, n_regular)
    n_tiny = n_regular - n_huge
    huge_qty = _lognormal_to_total(rng, n_huge, config.regular_huge_sigma,
                                   config.regular_huge_share * regular_total)
    tiny_qty = _lognormal_to_total(rng, n_tiny, config.regular_tiny_sigma,
                                   (1.0 - config.regular_huge_share) * regular_total)
    quantities = np.concatenate([mega_qty, mid_qty, huge_qty, tiny_qty])

    # budget buyers: discount hubs, the northern processors, and a slice of
    # the regular intake
    n_discount = config.mega_discount_count
    n_budget_regular = int(round(config.budget_order_fraction * n_regular))
    regular_start = n_mega + n_mid
    budget_positions = (set(range(n_discount))
                        | set(range(n_mega, regular_start))
                        | set(regular_start + rng.choice(
                            n_regular, size=n_budget_regular, replace=False)))
    # core mean chosen so the full mixture hits the configured demand mean
    n_budget = len(budget_positions)
    core_mean = ((config.demand_price_mean * n
                  - config.budget_price_mean * n_budget) / (n - n_budget))
    core_prices = _truncated_normal(rng, core_mean, config.demand_price_sd, n)
    budget_prices = _truncated_normal(rng, config.budget_price_mean,
                                      config.budget_price_sd, n)
    prices = np.where([i in budget_positions for i in range(n)],
                      budget_prices, core_prices)

    ceiling_mult = rng.uniform(*config.order_ceiling_range, size=n)
    jitter = config.expiry_jitter_days
    expiry_offsets = rng.integers(-jitter, jitter + 1, size=n)
    coords = np.concatenate([
        _sample_locations(rng, config.mega_discount_counties, n_discount,
                          config.location_jitter_deg),
        _sample_locations(rng, config.mega_core_counties, n_mega - n_discount,
                          config.location_jitter_deg),
        _sample_locations(rng, config.mid_demand_counties, n_mid,
                          config.location_jitter_deg),
        _sample_locations(rng, config.regular_demand_counties, n_regular,
                          config.location_jitter_deg),
    ])
    order_ids = _unique_hex_ids(rng, "ORD", n)
    buyer_ids = _unique_hex_ids(rng, "BUY", n)

    orders: list[Order] = []
    for i in range(n):
        expiry = config.order_expiry_anchor + timedelta(days=int(expiry_offsets[i]))
        postcode = f"ZD{i:05d}"
        postcodes.append((postcode, float(coords[i, 0]), float(coords[i, 1])))
        orders.append(Order(
            id=order_ids[i],
            buyer_id=buyer_ids[i],
            product_id=config.product_id,
            quantity=float(quantities[i]),
            min_quantity=config.min_quantity_factor * float(quantities[i]),
            price_per_unit=float(prices[i]),
            max_price_per_unit=float(prices[i] * ceiling_mult[i]),
            expiry_date=expiry,
            fulfill_date=expiry - timedelta(days=config.fulfill_lead_days),
            delivery_only=bool(n_mega <= i < n_mega + n_mid),
            delivery_postcode=postcode,
            single_offer=False,
        ))

    # ---- offers -----------------------------------------------------------
    m = config.n_offers
    raw_qty = rng.lognormal(mean=0.0, sigma=config.offer_qty_sigma, size=m)
    raw_qty *= config.total_supply / raw_qty.sum()
    # growers above the cap list multiple lots in practice; cap and rescale
    raw_qty = np.minimum(raw_qty, config.offer_max_size_t)
    raw_qty *= config.total_supply / raw_qty.sum()
    raw_qty = np.minimum(raw_qty, config.offer_max_size_t)
    n_remote = int(round(config.remote_offer_fraction * m))
    remote_positions = set(rng.choice(m, size=n_remote, replace=False))
    remote_sizes = rng.uniform(*config.remote_size_range, size=m)
    for i in remote_positions:
        raw_qty[i] = remote_sizes[i]
    quantities = raw_qty * (config.total_supply / raw_qty.sum())

    n_outliers = int(round(config.outlier_offer_fraction * m))
    non_remote = np.array(sorted(set(range(m)) - remote_positions))
    outlier_positions = set(non_remote[
        rng.choice(len(non_remote), size=n_outliers, replace=False)])
    prices = _truncated_normal(rng, config.supply_price_mean,
                               config.supply_price_sd, m)
    outlier_mult = rng.uniform(*config.outlier_price_multiplier, size=m)
    floor_mult = rng.uniform(*config.offer_floor_range, size=m)
    expiry_offsets = rng.integers(-jitter, jitter + 1, size=m)
    remote_expiry = rng.choice(config.remote_expiry_offsets, size=m)
    for i in remote_positions:
        expiry_offsets[i] = remote_expiry[i]
    production_lead = rng.integers(30, 91, size=m)
    coords = _sample_locations(rng, config.supply_counties, m,
                               config.location_jitter_deg)
    remote_coords = _sample_locations(rng, config.remote_counties, m,
                                      config.location_jitter_deg)
    for i in remote_positions:
        coords[i] = remote_coords[i]
    offer_ids = _unique_hex_ids(rng, "OFF", m)
    seller_ids = _unique_hex_ids(rng, "SEL", m)

    offers: list[Offer] = []
    for i in range(m):
        price = float(prices[i])
        if i in outlier_positions:
            price *= float(outlier_mult[i])
        quantity = float(quantities[i])
        expiry = config.offer_expiry_anchor + timedelta(days=int(expiry_offsets[i]))
        postcode = f"ZS{i:05d}"
        postcodes.append((postcode, float(coords[i, 0]), float(coords[i, 1])))
        offers.append(Offer(
            id=offer_ids[i],
            seller_id=seller_ids[i],
            product_id=config.product_id,
            quantity=quantity,
            min_quantity=config.min_quantity_factor * quantity,
            price_per_unit=price,
            min_price_per_unit=price * float(floor_mult[i]),
            production_date=expiry - timedelta(days=int(production_lead[i])),
            expiry_date=expiry,
            valid_from=config.validity_start,
            valid_until=config.validity_end,
            collection_only=bool(quantity < config.collection_cutoff_t),
            collection_postcode=postcode,
            single_order=False,
        ))

    return Dataset(offers=offers, orders=orders, postcodes=postcodes)
