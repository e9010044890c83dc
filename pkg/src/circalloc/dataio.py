"""CSV/JSON readers and writers for datasets, allocations, and diagnostics.

Float columns are written with ``repr`` so files round-trip exactly and
identical runs produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

from .datagen import Dataset
from .engine import AllocationResult, LeftoverDiagnostic
from .feasibility import RejectionRecord
from .geo import PostcodeIndex
from .model import Flow, Offer, Order, ValidationError, validate_offer, validate_order

OFFER_COLUMNS = ("id", "seller_id", "product_id", "quantity", "min_quantity",
                 "price_per_unit", "min_price_per_unit", "production_date",
                 "expiry_date", "valid_from", "valid_until", "collection_only",
                 "collection_postcode", "single_order")

ORDER_COLUMNS = ("id", "buyer_id", "product_id", "quantity", "min_quantity",
                 "price_per_unit", "max_price_per_unit", "expiry_date",
                 "fulfill_date", "delivery_only", "delivery_postcode",
                 "single_offer")

ALLOCATION_COLUMNS = ("iteration", "offer_id", "order_id", "quantity_t",
                      "transaction_price_gbp", "distance_km", "s_price",
                      "s_quantity", "s_freshness", "s_distance", "aggregate")


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RowError(ValueError):
    """A CSV row failed validation; carries the 1-based data row number."""

    def __init__(self, path: Path, row: int, cause: Exception):
        super().__init__(f"{path}, row {row}: {cause}")
        self.path = path
        self.row = row
        self.cause = cause


def write_offers_csv(path: Path, offers: Sequence[Offer]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(OFFER_COLUMNS)
        for o in offers:
            writer.writerow([_cell(getattr(o, col)) for col in OFFER_COLUMNS])


def write_orders_csv(path: Path, orders: Sequence[Order]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ORDER_COLUMNS)
        for o in orders:
            writer.writerow([_cell(getattr(o, col)) for col in ORDER_COLUMNS])


def write_postcodes_csv(path: Path, rows: Iterable[tuple[str, float, float]]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("code", "lat", "lon"))
        for code, lat, lon in rows:
            writer.writerow((code, repr(float(lat)), repr(float(lon))))


def write_dataset(out_dir: Path, dataset: Dataset) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "offers": out_dir / "offers.csv",
        "orders": out_dir / "orders.csv",
        "postcodes": out_dir / "postcodes.csv",
    }
    write_offers_csv(paths["offers"], dataset.offers)
    write_orders_csv(paths["orders"], dataset.orders)
    write_postcodes_csv(paths["postcodes"], dataset.postcodes)
    return paths


def read_offers_csv(path: Path) -> list[Offer]:
    offers = []
    with open(path, newline="") as handle:
        for row_no, row in enumerate(csv.DictReader(handle), start=1):
            try:
                offers.append(validate_offer(row))
            except ValidationError as exc:
                raise RowError(path, row_no, exc) from exc
    return offers


def read_orders_csv(path: Path) -> list[Order]:
    orders = []
    with open(path, newline="") as handle:
        for row_no, row in enumerate(csv.DictReader(handle), start=1):
            try:
                orders.append(validate_order(row))
            except ValidationError as exc:
                raise RowError(path, row_no, exc) from exc
    return orders


def read_postcodes_csv(path: Path) -> PostcodeIndex:
    with open(path, newline="") as handle:
        rows = [(row["code"], float(row["lat"]), float(row["lon"]))
                for row in csv.DictReader(handle)]
    return PostcodeIndex.from_rows(rows)


def write_allocations_csv(path: Path, flows: Sequence[Flow]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ALLOCATION_COLUMNS)
        for f in flows:
            writer.writerow([
                f.iteration, f.offer_id, f.order_id, repr(f.quantity),
                repr(f.transaction_price), repr(f.distance_km),
                repr(f.scores.price), repr(f.scores.quantity),
                repr(f.scores.freshness), repr(f.scores.distance),
                repr(f.scores.aggregate),
            ])


def _rejection_row(record: RejectionRecord, iteration: int) -> dict:
    return {
        "type": "rejection",
        "iteration": iteration,
        "offer_id": record.offer_id,
        "order_id": record.order_id,
        "reason": record.reason.value,
        "detail": record.detail,
    }


def _leftover_row(diag: LeftoverDiagnostic) -> dict:
    return {
        "type": "leftover",
        "offer_id": diag.offer_id,
        "remaining_tonnes": diag.remaining_tonnes,
        "mean_scores": {
            "price": diag.mean_price,
            "quantity": diag.mean_quantity,
            "freshness": diag.mean_freshness,
            "distance": diag.mean_distance,
            "aggregate": diag.mean_aggregate,
        },
        "dominant_reason": (diag.dominant_reason.value
                            if diag.dominant_reason else "NONE_REMAINING"),
    }


def write_diagnostics_jsonl(path: Path, result: AllocationResult) -> None:
    with open(path, "w") as handle:
        for record in result.iterations:
            for rejection in record.rejections:
                handle.write(json.dumps(_rejection_row(rejection, record.index),
                                        sort_keys=True) + "\n")
        for diag in result.leftover_diagnostics:
            handle.write(json.dumps(_leftover_row(diag), sort_keys=True) + "\n")
        for expired in result.expired_offers:
            handle.write(json.dumps({
                "type": "expired_supply",
                "offer_id": expired.offer.id,
                "remaining_tonnes": expired.offer.quantity,
                "reason": "EXPIRED_SUPPLY",
                "detail": expired.reroute_label,
            }, sort_keys=True) + "\n")


def write_json(path: Path, payload) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
