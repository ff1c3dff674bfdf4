"""Points of interest and the distance-weighted ring features.

For a property and a PoI category, each PoI at distance ``d`` contributes a
weight depending on the ring it falls in::

    d <= r/8        -> 1
    r/8 < d <= r/4  -> 1/2
    r/4 < d <= r/2  -> 1/4
    r/2 < d <= r    -> 1/8
    d > r           -> 0

PoI file: UTF-8 CSV with header ``category,latitude,longitude,name``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, UnknownCategoryError
from .geo import EARTH_RADIUS_M, GeoPoint, haversine_array, haversine_distance

log = logging.getLogger(__name__)

POI_CATEGORIES = (
    "Arts",
    "Business&Services",
    "Entertainment",
    "Food&Beverage",
    "Healthcare&Wellness",
    "Instruction",
    "Landmarks",
    "Religious services",
    "Retail",
    "Security",
    "Sport&Recreation",
    "Transportation",
    "Travel",
)

POI_COLUMNS = ("category", "latitude", "longitude", "name")

__all__ = [
    "POI_CATEGORIES",
    "PoiEntry",
    "PoiFeatureParams",
    "PoiStore",
    "load_pois",
    "dump_pois",
    "ring_weights",
    "poi_feature",
    "distance_to_center",
]


@dataclass(frozen=True)
class PoiEntry:
    category: str
    location: GeoPoint
    name: str = ""

    def __post_init__(self):
        if self.category not in POI_CATEGORIES:
            raise UnknownCategoryError(f"unknown PoI category {self.category!r}")


@dataclass(frozen=True)
class PoiFeatureParams:
    radius_r: float = 1000.0
    ring_weights: tuple[float, float, float, float] = (1.0, 0.5, 0.25, 0.125)
    ring_fractions: tuple[float, float, float, float] = (0.125, 0.25, 0.5, 1.0)

    def __post_init__(self):
        if not self.radius_r > 0:
            raise ValueError("radius_r must be positive")
        if len(self.ring_weights) != 4 or len(self.ring_fractions) != 4:
            raise ValueError("exactly four rings are required")
        fr = self.ring_fractions
        if any(b <= a for a, b in zip(fr, fr[1:])) or fr[0] <= 0 or fr[-1] != 1.0:
            raise ValueError("ring_fractions must be strictly increasing and end at 1")
        w = self.ring_weights
        if any(b > a for a, b in zip(w, w[1:])) or w[-1] < 0:
            raise ValueError("ring_weights must be non-increasing and non-negative")

    @property
    def bounds(self) -> np.ndarray:
        return np.array([f * self.radius_r for f in self.ring_fractions])


def ring_weights(distances, params: PoiFeatureParams) -> np.ndarray:
    """Per-PoI contribution for an array of distances in meters."""
    d = np.asarray(distances, dtype=float)
    # first bound b with d <= b
    ring = np.searchsorted(params.bounds, d, side="left")
    w = np.append(np.asarray(params.ring_weights, dtype=float), 0.0)
    return w[ring]


class PoiStore:
    """PoIs grouped by category, each group sorted by latitude.

    The latitude ordering gives a band prefilter: a PoI more than ``r / R``
    radians of latitude away is farther than ``r`` on the sphere.
    """

    def __init__(self, entries: Iterable[PoiEntry] = ()):
        groups: dict[str, list[PoiEntry]] = {c: [] for c in POI_CATEGORIES}
        for e in entries:
            groups[e.category].append(e)
        self._lat = {}
        self._lon = {}
        self._count = 0
        for c, items in groups.items():
            lat = np.array([e.location.latitude for e in items], dtype=float)
            lon = np.array([e.location.longitude for e in items], dtype=float)
            order = np.argsort(lat, kind="stable")
            self._lat[c] = lat[order]
            self._lon[c] = lon[order]
            self._count += len(items)

    def __len__(self):
        return self._count

    def count(self, category: str) -> int:
        self._check(category)
        return len(self._lat[category])

    def _check(self, category):
        if category not in self._lat:
            raise UnknownCategoryError(f"unknown PoI category {category!r}")

    def distances(self, p: GeoPoint, category: str, max_distance: float | None = None) -> np.ndarray:
        """Distances from ``p`` to PoIs of ``category``.

        With ``max_distance`` only PoIs in the latitude band that may lie
        within that distance are measured.
        """
        self._check(category)
        lat, lon = self._lat[category], self._lon[category]
        if max_distance is not None and len(lat):
            band = math.degrees(max_distance / EARTH_RADIUS_M) * (1 + 1e-9) + 1e-12
            lo = np.searchsorted(lat, p.latitude - band, side="left")
            hi = np.searchsorted(lat, p.latitude + band, side="right")
            lat, lon = lat[lo:hi], lon[lo:hi]
        return haversine_array(p.latitude, p.longitude, lat, lon)

    def entries(self, category: str) -> list[GeoPoint]:
        self._check(category)
        return [GeoPoint(a, b) for a, b in zip(self._lat[category], self._lon[category])]


def load_pois(path) -> PoiStore:
    path = Path(path)
    entries, bad = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            log.info("empty PoI file %s", path)
            return PoiStore()
        missing = [c for c in ("category", "latitude", "longitude") if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            cat = row["category"]
            if cat not in POI_CATEGORIES:
                bad.append(f"line {lineno}: {cat!r}")
                continue
            try:
                loc = GeoPoint(float(row["latitude"]), float(row["longitude"]))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            entries.append(PoiEntry(cat, loc, row.get("name") or ""))
    if bad:
        raise UnknownCategoryError(f"{path}: unknown PoI categories at " + ", ".join(bad))
    store = PoiStore(entries)
    log.info("loaded %d PoIs from %s", len(store), path)
    return store


def dump_pois(entries: Sequence[PoiEntry], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POI_COLUMNS)
        for e in entries:
            w.writerow([e.category, repr(float(e.location.latitude)), repr(float(e.location.longitude)), e.name])


def poi_feature(store: PoiStore, p: GeoPoint, category: str, params: PoiFeatureParams = PoiFeatureParams()) -> float:
    d = store.distances(p, category, max_distance=params.radius_r)
    return float(ring_weights(d, params).sum())


def distance_to_center(p: GeoPoint, center: GeoPoint) -> float:
    return haversine_distance(p, center)
