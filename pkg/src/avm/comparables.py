"""Comparable-property search over a local corpus of adverts and prior appraisals.

The search mimics what an appraiser does on a listings portal: look within a
radius, tighten the radius when there are too many hits, then add
similarity filters (floor, maintenance status, surface) until a short list
remains. The output feature is the mean price per square meter of that list.

Corpus file: CSV with header
``latitude,longitude,surface,price,floor,maintenance,listed_date,source_kind``;
dates are ISO-8601, ``maintenance`` is low/medium/high, ``source_kind`` is
``advert`` or ``prior_appraisal``.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ordinal
from .errors import InvariantViolationError, ParseError
from .geo import EARTH_RADIUS_M, GeoPoint, haversine_array

log = logging.getLogger(__name__)

CORPUS_COLUMNS = ("latitude", "longitude", "surface", "price", "floor", "maintenance", "listed_date", "source_kind")
SOURCE_KINDS = ("advert", "prior_appraisal")

__all__ = [
    "CORPUS_COLUMNS",
    "ComparableAd",
    "ComparableQuery",
    "ComparableResult",
    "ComparableConfig",
    "ComparableCorpus",
    "load_corpus",
    "dump_corpus",
    "find_comparables",
]


@dataclass(frozen=True)
class ComparableAd:
    location: GeoPoint
    surface: float
    price: float
    floor: int
    maintenance: str
    listed_date: dt.date
    source_kind: str = "advert"

    def __post_init__(self):
        if not self.surface > 0:
            raise ValueError("surface > 0 violated")
        if not self.price > 0:
            raise ValueError("price > 0 violated")
        ordinal.check_level(self.maintenance, "maintenance")
        if self.source_kind not in SOURCE_KINDS:
            raise ValueError(f"source_kind must be one of {SOURCE_KINDS}")

    @property
    def price_per_sqm(self) -> float:
        return self.price / self.surface


@dataclass(frozen=True)
class ComparableQuery:
    target_location: GeoPoint
    target_surface: float
    target_floor: int
    target_maintenance: str
    as_of: dt.date
    max_results: int = 6
    initial_radius: float = 1000.0

    def __post_init__(self):
        if self.max_results < 1:
            raise ValueError("max_results must be >= 1")
        if not self.initial_radius > 0:
            raise ValueError("initial_radius must be positive")


@dataclass(frozen=True)
class ComparableResult:
    selected: list
    avg_price_per_sqm: float | None
    final_radius: float
    filters_applied: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.selected


@dataclass(frozen=True)
class ComparableConfig:
    """Constants of the staged narrowing procedure."""

    overshoot_factor: float = 3.0
    shrink_factor: float = 0.5
    floor_tolerance: int = 2
    surface_tolerance: float = 0.30
    expand_factor: float = 2.0
    max_expansion: float = 4.0
    # radius shrinking stops here so coincident ads cannot loop forever
    min_radius: float = 10.0


class ComparableCorpus:
    """Immutable corpus with column arrays and a latitude-sorted index."""

    def __init__(self, ads: Sequence[ComparableAd]):
        self._ads = tuple(ads)
        n = len(self._ads)
        self.lat = np.array([a.location.latitude for a in self._ads], dtype=float)
        self.lon = np.array([a.location.longitude for a in self._ads], dtype=float)
        self.surface = np.array([a.surface for a in self._ads], dtype=float)
        self.price = np.array([a.price for a in self._ads], dtype=float)
        self.floor = np.array([a.floor for a in self._ads], dtype=np.int64)
        self.maintenance = np.array([ordinal.encode(a.maintenance) for a in self._ads], dtype=np.int64)
        self.day = np.array([a.listed_date.toordinal() for a in self._ads], dtype=np.int64)
        self._order = np.argsort(self.lat, kind="stable") if n else np.zeros(0, dtype=np.int64)
        self._sorted_lat = self.lat[self._order]

    def __len__(self):
        return len(self._ads)

    def __getitem__(self, i) -> ComparableAd:
        return self._ads[i]

    def __iter__(self):
        return iter(self._ads)

    def near(self, p: GeoPoint, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Corpus indices (ascending) and distances of ads within ``radius``."""
        if not len(self._ads):
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        band = math.degrees(radius / EARTH_RADIUS_M) * (1 + 1e-9) + 1e-12
        lo = np.searchsorted(self._sorted_lat, p.latitude - band, side="left")
        hi = np.searchsorted(self._sorted_lat, p.latitude + band, side="right")
        idx = np.sort(self._order[lo:hi])
        d = haversine_array(p.latitude, p.longitude, self.lat[idx], self.lon[idx])
        keep = d <= radius
        return idx[keep], d[keep]


def _parse_date(s: str) -> dt.date:
    return dt.date.fromisoformat(s.strip())


def load_corpus(path) -> ComparableCorpus:
    path = Path(path)
    ads = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CORPUS_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                values = dict(
                    location=GeoPoint(float(row["latitude"]), float(row["longitude"])),
                    surface=float(row["surface"]),
                    price=float(row["price"]),
                    floor=int(row["floor"]),
                    maintenance=row["maintenance"].strip(),
                    listed_date=_parse_date(row["listed_date"]),
                    source_kind=row["source_kind"].strip(),
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            try:
                ads.append(ComparableAd(**values))
            except ValueError as exc:
                raise InvariantViolationError(f"{path}: line {lineno}: {exc}") from exc
    corpus = ComparableCorpus(ads)
    kinds = {k: sum(a.source_kind == k for a in ads) for k in SOURCE_KINDS}
    log.info("loaded %d comparables from %s (%s)", len(corpus), path, kinds)
    return corpus


def dump_corpus(ads: Sequence[ComparableAd], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CORPUS_COLUMNS)
        for a in ads:
            w.writerow(
                [
                    repr(float(a.location.latitude)),
                    repr(float(a.location.longitude)),
                    repr(float(a.surface)),
                    repr(float(a.price)),
                    a.floor,
                    a.maintenance,
                    a.listed_date.isoformat(),
                    a.source_kind,
                ]
            )


def find_comparables(corpus: ComparableCorpus, q: ComparableQuery, config: ComparableConfig = ComparableConfig()) -> ComparableResult:
    """Select up to ``q.max_results`` comparables for a target property.

    Stages:

    1. ads listed on or before ``q.as_of`` within ``q.initial_radius``; when
       none, the radius is multiplied by ``expand_factor`` up to
       ``max_expansion`` times the initial radius;
    2. while there are more than ``overshoot_factor * max_results``
       candidates the radius is multiplied by ``shrink_factor``, unless that
       would leave fewer than ``max_results`` candidates or go below
       ``min_radius``;
    3. while more than ``max_results`` remain, filters are applied in order:
       floor within ``floor_tolerance``, same maintenance level, surface
       within ``surface_tolerance`` of the target; a filter that would
       remove every candidate is skipped;
    4. survivors are ranked by distance, then surface difference, then
       corpus order, and the first ``max_results`` are kept.
    """
    m = q.max_results
    cap = q.initial_radius * config.max_expansion
    idx, dist = corpus.near(q.target_location, cap * (1 + 1e-12))
    dated = corpus.day[idx] <= q.as_of.toordinal()
    idx, dist = idx[dated], dist[dated]

    radius = q.initial_radius
    cand = dist <= radius
    while not cand.any():
        nxt = radius * config.expand_factor
        if nxt > cap * (1 + 1e-12):
            return ComparableResult([], None, radius, [])
        radius = nxt
        cand = dist <= radius

    while cand.sum() > config.overshoot_factor * m:
        nxt = radius * config.shrink_factor
        if nxt < config.min_radius:
            break
        narrower = dist <= nxt
        if narrower.sum() < m:
            break
        radius, cand = nxt, narrower

    applied = []
    if cand.sum() > m:
        sel = idx
        filters = (
            ("floor", np.abs(corpus.floor[sel] - q.target_floor) <= config.floor_tolerance),
            ("maintenance", corpus.maintenance[sel] == ordinal.encode(q.target_maintenance)),
            ("surface", np.abs(corpus.surface[sel] - q.target_surface) <= config.surface_tolerance * q.target_surface),
        )
        for name, mask in filters:
            if cand.sum() <= m:
                break
            narrowed = cand & mask
            if narrowed.any():
                cand = narrowed
                applied.append(name)

    pos = np.flatnonzero(cand)
    sdiff = np.abs(corpus.surface[idx[pos]] - q.target_surface)
    # lexsort: last key is primary
    order = np.lexsort((idx[pos], sdiff, dist[pos]))
    keep = idx[pos[order[:m]]]
    ppsqm = corpus.price[keep] / corpus.surface[keep]
    selected = [corpus[int(i)] for i in keep]
    return ComparableResult(selected, float(ppsqm.mean()), float(radius), applied)
