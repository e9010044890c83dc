"""Postcode resolution and great-circle shipping distances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .model import Offer, Order

EARTH_RADIUS_KM = 6371.0


class UnknownPostcodeError(KeyError):
    def __init__(self, postcode: str):
        super().__init__(postcode)
        self.postcode = postcode

    def __str__(self) -> str:
        return f"UNKNOWN_POSTCODE: {self.postcode!r} not present in the postcode index"


@dataclass(frozen=True)
class GeoPoint:
    """Decimal-degree coordinate; latitude in [-90, 90], longitude in [-180, 180]."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


def normalize_postcode(code: str) -> str:
    """Uppercase and strip all whitespace, the canonical lookup key."""
    return "".join(str(code).split()).upper()


class PostcodeIndex:
    """Read-only map from normalized postcode to coordinates."""

    def __init__(self, entries: Mapping[str, GeoPoint]):
        self._points = {normalize_postcode(code): pt for code, pt in entries.items()}

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, float, float]]) -> "PostcodeIndex":
        return cls({code: GeoPoint(float(lat), float(lon)) for code, lat, lon in rows})

    def __len__(self) -> int:
        return len(self._points)

    def __contains__(self, code: str) -> bool:
        return normalize_postcode(code) in self._points

    def resolve(self, code: str) -> GeoPoint:
        try:
            return self._points[normalize_postcode(code)]
        except KeyError:
            raise UnknownPostcodeError(code) from None


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km (Earth radius 6371.0 km)."""
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    sin_dlat = math.sin((lat2 - lat1) / 2.0)
    sin_dlon = math.sin((lon2 - lon1) / 2.0)
    h = sin_dlat * sin_dlat + math.cos(lat1) * math.cos(lat2) * sin_dlon * sin_dlon
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def pairwise_km(points_a: list[GeoPoint], points_b: list[GeoPoint]) -> np.ndarray:
    """Distance matrix (len(a) x len(b)) via vectorized haversine."""
    if not points_a or not points_b:
        return np.zeros((len(points_a), len(points_b)))
    lat_a = np.radians([p.lat for p in points_a])[:, None]
    lon_a = np.radians([p.lon for p in points_a])[:, None]
    lat_b = np.radians([p.lat for p in points_b])[None, :]
    lon_b = np.radians([p.lon for p in points_b])[None, :]
    sin_dlat = np.sin((lat_b - lat_a) / 2.0)
    sin_dlon = np.sin((lon_b - lon_a) / 2.0)
    h = sin_dlat ** 2 + np.cos(lat_a) * np.cos(lat_b) * sin_dlon ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def arc_distance(offer: Offer, order: Order, index: PostcodeIndex) -> float:
    """Shipping distance between an offer's collection point and an order's delivery point."""
    return haversine_km(index.resolve(offer.collection_postcode),
                        index.resolve(order.delivery_postcode))
