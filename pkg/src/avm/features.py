"""Feature sets and vectorization.

Three feature sets are supported:

``hedonic``
    every appraisal attribute, the 13 PoI ring features, distance to the
    city center and the OMI zone name (one-hot). ``include_omi_values``
    adds the OMI min/max prices to this set.
``omi_centered``
    OMI min and max price per square meter, and surface.
``omi_centered_comparables``
    the above plus the mean price per square meter of comparables.

Continuous columns are mapped to [-1, 1] with ``2 (x - min) / (max - min) - 1``
using ranges fitted on training records, clamped outside the range. Ordinal
levels map to -1/0/1 and booleans to -1/+1 directly.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ordinal
from .comparables import ComparableConfig, ComparableCorpus, ComparableQuery, find_comparables
from .dataset import AppraisalRecord
from .errors import CoverageError, MissingFeatureError
from .geo import GeoPoint
from .omi import OmiZoneStore, quote
from .poi import POI_CATEGORIES, PoiFeatureParams, PoiStore, distance_to_center, poi_feature

log = logging.getLogger(__name__)

SET_KINDS = ("hedonic", "omi_centered", "omi_centered_comparables")

ORDINAL_COLUMNS = ("maintenance", "installations_quality", "finishing_quality", "view")
CONTINUOUS_HEDONIC = ("construction_year", "bathrooms", "floor", "surface", "latitude", "longitude")
ONE_HOT_GROUPS = ("energy_class", "registered_use", "orientation", "city_area", "omi_zone")

__all__ = [
    "SET_KINDS",
    "FeatureConfig",
    "FeatureContext",
    "FeatureSchema",
    "FeatureVector",
    "poi_column",
    "build_schema",
    "vectorize",
    "build_vectors",
    "export_matrix",
]


def poi_column(category: str) -> str:
    return "poi_" + category.lower().replace("&", "_").replace(" ", "_")


@dataclass(frozen=True)
class FeatureConfig:
    city_center: GeoPoint
    poi_params: PoiFeatureParams = PoiFeatureParams()
    comparable_config: ComparableConfig = ComparableConfig()
    max_comparables: int = 6
    comparable_radius: float = 1000.0
    include_omi_values: bool = False
    target_per_sqm: bool = False
    registered_use: str = "residential"

    def to_dict(self) -> dict:
        return {
            "city_center": [self.city_center.latitude, self.city_center.longitude],
            "poi_params": {
                "radius_r": self.poi_params.radius_r,
                "ring_weights": list(self.poi_params.ring_weights),
                "ring_fractions": list(self.poi_params.ring_fractions),
            },
            "comparable_config": dataclasses.asdict(self.comparable_config),
            "max_comparables": self.max_comparables,
            "comparable_radius": self.comparable_radius,
            "include_omi_values": self.include_omi_values,
            "target_per_sqm": self.target_per_sqm,
            "registered_use": self.registered_use,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        d = dict(d)
        d["city_center"] = GeoPoint(*d["city_center"])
        if "poi_params" in d:
            pp = d["poi_params"]
            d["poi_params"] = PoiFeatureParams(
                pp["radius_r"], tuple(pp["ring_weights"]), tuple(pp["ring_fractions"])
            )
        if "comparable_config" in d:
            d["comparable_config"] = ComparableConfig(**d["comparable_config"])
        return cls(**d)


@dataclass
class FeatureContext:
    """Data sources needed to derive features, with a per-record cache."""

    omi: OmiZoneStore
    pois: PoiStore
    corpus: ComparableCorpus
    config: FeatureConfig
    _cache: dict = field(default_factory=dict, repr=False)

    def zone_name(self, r: AppraisalRecord) -> str | None:
        key = ("zone", r.location)
        if key not in self._cache:
            z = self.omi.resolve(r.location)
            self._cache[key] = None if z is None else z.name
        return self._cache[key]

    def omi_quote(self, r: AppraisalRecord):
        use = self.config.registered_use
        key = ("quote", r.location, r.appraisal_date, use)
        if key not in self._cache:
            self._cache[key] = quote(self.omi, r.location, r.appraisal_date, use)
        return self._cache[key]

    def poi_values(self, r: AppraisalRecord) -> dict[str, float]:
        key = ("poi", r.location)
        if key not in self._cache:
            p = self.config.poi_params
            vals = {poi_column(c): poi_feature(self.pois, r.location, c, p) for c in POI_CATEGORIES}
            vals["distance_to_center"] = distance_to_center(r.location, self.config.city_center)
            self._cache[key] = vals
        return self._cache[key]

    def comparable_price(self, r: AppraisalRecord) -> float | None:
        key = ("comp", r.location, r.surface, r.floor, r.maintenance, r.appraisal_date)
        if key not in self._cache:
            q = ComparableQuery(
                r.location,
                r.surface,
                r.floor,
                r.maintenance,
                r.appraisal_date,
                self.config.max_comparables,
                self.config.comparable_radius,
            )
            self._cache[key] = find_comparables(self.corpus, q, self.config.comparable_config).avg_price_per_sqm
        return self._cache[key]


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered columns of a feature set.

    ``columns`` holds ``(name, kind)`` pairs with kind ``numeric`` or
    ``one_hot_group``; ``groups`` lists the categories of each one-hot group
    and ``standardization`` the ``(min, max)`` range of each numeric column.
    """

    set_kind: str
    columns: tuple
    groups: dict
    standardization: dict
    target_per_sqm: bool = False

    def to_dict(self) -> dict:
        return {
            "set_kind": self.set_kind,
            "columns": [list(c) for c in self.columns],
            "groups": {k: list(v) for k, v in self.groups.items()},
            "standardization": {k: list(v) for k, v in self.standardization.items()},
            "target_per_sqm": self.target_per_sqm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            d["set_kind"],
            tuple((a, b) for a, b in d["columns"]),
            {k: tuple(v) for k, v in d["groups"].items()},
            {k: tuple(v) for k, v in d["standardization"].items()},
            d.get("target_per_sqm", False),
        )

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def feature_names(self) -> list[str]:
        names = []
        for name, kind in self.columns:
            if kind == "numeric":
                names.append(name)
            else:
                names.extend(f"{name}={c}" for c in self.groups[name])
        return names

    @property
    def width(self) -> int:
        return len(self.feature_names)

    @property
    def uses_zone_names(self) -> bool:
        return any(name == "omi_zone" for name, _ in self.columns)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    target: float | None
    schema: FeatureSchema
    record_id: str = ""
    # multiplies target and predictions back to EUR (surface in per-m2 mode)
    target_scale: float = 1.0


_FIXED = (-1.0, 1.0)


def _raw(kind: str, r: AppraisalRecord, ctx: FeatureContext):
    """Unscaled numeric values and categorical values for one record."""
    num: dict[str, float] = {}
    cat: dict[str, str] = {}
    need_quote = kind != "hedonic" or ctx.config.include_omi_values
    zone = ctx.zone_name(r)
    if zone is None:
        raise MissingFeatureError(f"record {r.id}: location is not inside any OMI zone")
    if need_quote:
        q = ctx.omi_quote(r)
        if q is None:
            raise MissingFeatureError(f"record {r.id}: no OMI price range for {ctx.config.registered_use!r} at {r.appraisal_date}")
    if kind == "hedonic":
        for c in CONTINUOUS_HEDONIC:
            num[c] = float(getattr(r, c) if c not in ("latitude", "longitude") else getattr(r.location, c))
        num["elevator"] = 1.0 if r.elevator else -1.0
        for c in ORDINAL_COLUMNS:
            num[c] = float(ordinal.encode(getattr(r, c)))
        num.update(ctx.poi_values(r))
        if ctx.config.include_omi_values:
            num["omi_min"] = q.omi_min
            num["omi_max"] = q.omi_max
        cat = {
            "energy_class": r.energy_class,
            "registered_use": r.registered_use,
            "orientation": r.orientation,
            "city_area": r.city_area,
            "omi_zone": zone,
        }
    else:
        num["omi_min"] = q.omi_min
        num["omi_max"] = q.omi_max
        num["surface"] = r.surface
        if kind == "omi_centered_comparables":
            avg = ctx.comparable_price(r)
            if avg is None:
                raise MissingFeatureError(f"record {r.id}: no comparable properties found")
            num["avg_comparable_price_per_sqm"] = avg
    return num, cat


def _numeric_columns(kind: str, config: FeatureConfig) -> list[tuple[str, bool]]:
    """``(name, fitted)`` pairs; unfitted columns use the fixed [-1, 1] range."""
    if kind == "hedonic":
        cols = [(c, True) for c in CONTINUOUS_HEDONIC]
        cols.append(("elevator", False))
        cols.extend((c, False) for c in ORDINAL_COLUMNS)
        cols.extend((poi_column(c), True) for c in POI_CATEGORIES)
        cols.append(("distance_to_center", True))
        if config.include_omi_values:
            cols += [("omi_min", True), ("omi_max", True)]
        return cols
    cols = [("omi_min", True), ("omi_max", True), ("surface", True)]
    if kind == "omi_centered_comparables":
        cols.append(("avg_comparable_price_per_sqm", True))
    return cols


def build_schema(kind: str, train_records: Sequence[AppraisalRecord], ctx: FeatureContext) -> FeatureSchema:
    """Fit a schema (column layout and scaling ranges) on training records."""
    if kind not in SET_KINDS:
        raise ValueError(f"unknown feature set {kind!r}")
    if not train_records:
        raise ValueError("no training records")
    uncovered = [r.id for r in train_records if ctx.zone_name(r) is None]
    if uncovered:
        raise CoverageError(f"{len(uncovered)} training records outside every OMI zone, e.g. {uncovered[:5]}")
    numeric = _numeric_columns(kind, ctx.config)
    rows, cats = [], []
    for r in train_records:
        try:
            num, cat = _raw(kind, r, ctx)
        except MissingFeatureError as exc:
            log.warning("schema fit skips %s", exc)
            continue
        rows.append(num)
        cats.append(cat)
    if not rows:
        raise MissingFeatureError("no training record has the features of this set")
    std = {}
    for name, fitted in numeric:
        if fitted:
            vals = [row[name] for row in rows]
            std[name] = (float(min(vals)), float(max(vals)))
        else:
            std[name] = _FIXED
    columns = [(name, "numeric") for name, _ in numeric]
    groups = {}
    if kind == "hedonic":
        for g in ONE_HOT_GROUPS:
            seen = {c[g] for c in cats}
            if g == "omi_zone":
                groups[g] = tuple(n for n in ctx.omi.names if n in seen)
            else:
                groups[g] = tuple(sorted(seen))
            columns.append((g, "one_hot_group"))
    return FeatureSchema(kind, tuple(columns), groups, std, ctx.config.target_per_sqm)


def _scale(x: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    v = 2.0 * (x - lo) / (hi - lo) - 1.0
    return min(1.0, max(-1.0, v))


def vectorize(schema: FeatureSchema, record: AppraisalRecord, ctx: FeatureContext, with_target: bool = True) -> FeatureVector:
    num, cat = _raw(schema.set_kind, record, ctx)
    values = []
    for name, kind in schema.columns:
        if kind == "numeric":
            lo, hi = schema.standardization[name]
            values.append(_scale(num[name], lo, hi))
        else:
            cats = schema.groups[name]
            hot = cat[name]
            if hot not in cats and name == "omi_zone":
                log.warning("record %s: OMI zone %s unseen in training, one-hot left empty", record.id, hot)
            values.extend(1.0 if c == hot else 0.0 for c in cats)
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    scale = record.surface if schema.target_per_sqm else 1.0
    target = None
    if with_target:
        target = record.valuation / scale
    return FeatureVector(arr, target, schema, record.id, scale)


def build_vectors(schema: FeatureSchema, records: Sequence[AppraisalRecord], ctx: FeatureContext, with_target: bool = True):
    """Vectorize many records; returns ``(vectors, skipped)``.

    ``skipped`` holds ``(record_id, reason)`` for records whose features are
    unavailable (no OMI zone or range, no comparables).
    """
    vectors, skipped = [], []
    for r in records:
        try:
            vectors.append(vectorize(schema, r, ctx, with_target))
        except MissingFeatureError as exc:
            log.info("skipped %s", exc)
            skipped.append((r.id, str(exc)))
    return vectors, skipped


def export_matrix(vectors: Sequence[FeatureVector], path) -> None:
    """Write vectors as CSV: ``id``, one column per feature, ``target``."""
    if not vectors:
        raise ValueError("nothing to export")
    names = vectors[0].schema.feature_names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *names, "target"])
        for v in vectors:
            w.writerow([v.record_id, *(repr(float(x)) for x in v.values), "" if v.target is None else repr(v.target)])
