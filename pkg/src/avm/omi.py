"""OMI zones: named polygons with semiannual price ranges per registered use.

Zone file format (JSON)::

    {
      "zones": [
        {
          "name": "B01",
          "polygon": [[45.07, 7.68], [45.08, 7.68], [45.08, 7.69]],
          "holes": [],                      # optional list of rings
          "ranges": [
            {"year": 2016, "half": 1, "use": "residential", "min": 1200, "max": 1800}
          ]
        }
      ]
    }

Vertices are ``[lat, lon]`` pairs; rings may or may not repeat the first
vertex. Prices are EUR per square meter.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import jsonschema

from .errors import DuplicateNameError, ParseError
from .geo import GeoPoint, GeoPolygon, point_in_polygon

log = logging.getLogger(__name__)

__all__ = [
    "SemesterId",
    "OmiZone",
    "OmiQuote",
    "OmiZoneStore",
    "ZONE_FILE_SCHEMA",
    "load_zones",
    "dump_zones",
    "resolve_zone",
    "quote",
]

_RING = {
    "type": "array",
    "minItems": 3,
    "items": {
        "type": "array",
        "minItems": 2,
        "maxItems": 2,
        "items": {"type": "number"},
    },
}

ZONE_FILE_SCHEMA = {
    "type": "object",
    "required": ["zones"],
    "properties": {
        "zones": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "polygon", "ranges"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "polygon": _RING,
                    "holes": {"type": "array", "items": _RING},
                    "ranges": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["year", "half", "use", "min", "max"],
                            "properties": {
                                "year": {"type": "integer"},
                                "half": {"enum": [1, 2]},
                                "use": {"type": "string"},
                                "min": {"type": "number", "exclusiveMinimum": 0},
                                "max": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                    },
                },
            },
        }
    },
}


@dataclass(frozen=True, order=True)
class SemesterId:
    year: int
    half: int

    def __post_init__(self):
        if self.half not in (1, 2):
            raise ValueError(f"semester half must be 1 or 2, got {self.half}")

    @classmethod
    def from_date(cls, date: dt.date) -> "SemesterId":
        return cls(date.year, 1 if date.month <= 6 else 2)

    def __str__(self):
        return f"{self.year}H{self.half}"


@dataclass(frozen=True)
class OmiQuote:
    zone_name: str
    omi_min: float
    omi_max: float
    semester: SemesterId


@dataclass(frozen=True)
class OmiZone:
    name: str
    polygon: GeoPolygon
    price_ranges: Mapping[tuple[SemesterId, str], tuple[float, float]]

    def __post_init__(self):
        for key, (lo, hi) in self.price_ranges.items():
            if not lo > 0:
                raise ValueError(f"zone {self.name}: min price must be > 0 at {key}")
            if hi < lo:
                raise ValueError(f"zone {self.name}: max price < min price at {key}")

    def range_for(self, semester: SemesterId, use: str) -> tuple[SemesterId, float, float] | None:
        """Range at ``semester`` or else at the latest earlier semester."""
        best = None
        for (sem, u), (lo, hi) in self.price_ranges.items():
            if u != use or sem > semester:
                continue
            if best is None or sem > best[0]:
                best = (sem, lo, hi)
        return best


class OmiZoneStore:
    """Immutable ordered collection of zones.

    Lookup order is load order; on overlapping boundaries the earliest zone
    wins.
    """

    def __init__(self, zones: Iterable[OmiZone]):
        zones = tuple(zones)
        seen = set()
        for z in zones:
            if z.name in seen:
                raise DuplicateNameError(f"duplicate zone name {z.name!r}")
            seen.add(z.name)
        self._zones = zones
        self._by_name = {z.name: z for z in zones}

    def __len__(self):
        return len(self._zones)

    def __iter__(self):
        return iter(self._zones)

    def __getitem__(self, name: str) -> OmiZone:
        return self._by_name[name]

    @property
    def names(self) -> list[str]:
        return [z.name for z in self._zones]

    def resolve(self, p: GeoPoint) -> OmiZone | None:
        for z in self._zones:
            if z.polygon.in_bbox(p) and point_in_polygon(p, z.polygon):
                return z
        return None


def _parse_zone(i: int, raw: dict) -> OmiZone:
    try:
        poly = GeoPolygon(raw["polygon"], raw.get("holes", []))
        ranges = {}
        for r in raw["ranges"]:
            key = (SemesterId(r["year"], r["half"]), r["use"])
            if key in ranges:
                raise ValueError(f"repeated range for {key[0]} / {key[1]!r}")
            ranges[key] = (float(r["min"]), float(r["max"]))
        return OmiZone(raw["name"], poly, ranges)
    except ValueError as exc:
        raise ParseError(f"zone record {i} ({raw.get('name')!r}): {exc}") from exc


def load_zones(path) -> OmiZoneStore:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        jsonschema.validate(doc, ZONE_FILE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path)
        raise ParseError(f"{path}: at {where or '<root>'}: {exc.message}") from exc
    store = OmiZoneStore(_parse_zone(i, raw) for i, raw in enumerate(doc["zones"]))
    log.info("loaded %d OMI zones from %s", len(store), path)
    return store


def dump_zones(zones: Iterable[OmiZone], path) -> None:
    """Write zones in the format read by :func:`load_zones`."""
    out = []
    for z in zones:
        ranges = [
            {"year": sem.year, "half": sem.half, "use": use, "min": lo, "max": hi}
            for (sem, use), (lo, hi) in sorted(z.price_ranges.items())
        ]
        out.append(
            {
                "name": z.name,
                "polygon": [list(v) for v in z.polygon.exterior],
                "holes": [[list(v) for v in h] for h in z.polygon.holes],
                "ranges": ranges,
            }
        )
    Path(path).write_text(json.dumps({"zones": out}, indent=1) + "\n", encoding="utf-8")


def resolve_zone(store: OmiZoneStore, p: GeoPoint) -> OmiZone | None:
    return store.resolve(p)


def quote(store: OmiZoneStore, p: GeoPoint, date: dt.date, registered_use: str = "residential") -> OmiQuote | None:
    """OMI price range in force for ``p`` at ``date``.

    Falls back to the latest earlier semester when the exact one is missing,
    never to a later one. Returns ``None`` when no zone or range applies.
    """
    zone = store.resolve(p)
    if zone is None:
        return None
    hit = zone.range_for(SemesterId.from_date(date), registered_use)
    if hit is None:
        return None
    sem, lo, hi = hit
    return OmiQuote(zone.name, lo, hi, sem)
